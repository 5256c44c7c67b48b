#include "aldk/deformation.hpp"
#include "aldk/errors.hpp"
#include "aldk/gradcheck.hpp"
#include "aldk/networks.hpp"
#include "aldk/ops.hpp"
#include "aldk/phantom.hpp"
#include "test_util.hpp"

namespace aldk {
namespace {

struct Pair {
  Volume moving, fixed;
};

Pair phantom_pair(std::int64_t extent, std::uint64_t seed) {
  return {gen_phantom(PhantomSpec{.extent = extent, .seed = seed}).image,
          gen_phantom(PhantomSpec{.extent = extent, .seed = seed + 1}).image};
}

void zero_flow_heads(ParameterCollection& params, int cascades) {
  for (int k = 0; k < cascades; ++k)
    for (const char* part : {"flow.weight", "flow.bias"}) {
      auto& p = params.at(cascade_prefix(k) + part);
      p.assign(Tensor(p.value().shape(), 0.0f));
    }
}

TEST(Init, DeterministicInSeed) {
  const auto a = init_student(StudentConfig{}, 4), b = init_student(StudentConfig{}, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_identical(a[i].value(), b[i].value()));
  const auto d1 = init_discriminator(DiscriminatorConfig{}, 4), d2 = init_discriminator(DiscriminatorConfig{}, 4);
  for (std::size_t i = 0; i < d1.size(); ++i) EXPECT_TRUE(bit_identical(d1[i].value(), d2[i].value()));
}

TEST(Init, DifferentSeedsDiffer) {
  const auto a = init_student(StudentConfig{}, 1), b = init_student(StudentConfig{}, 2);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || !(a[i].value() == b[i].value());
  EXPECT_TRUE(differs);
}

TEST(Init, BiasesAreZero) {
  for (const auto& params : {init_student(StudentConfig{.cascades = 2}, 3), init_discriminator(DiscriminatorConfig{}, 3)})
    for (const auto& p : params)
      if (p.name.ends_with(".bias")) {
        for (float v : p.value().data()) EXPECT_EQ(v, 0.0f) << p.name;
      }
}

TEST(Init, RejectsInvalidConfigs) {
  EXPECT_THROW(init_student(StudentConfig{.base_channels = 0}, 0), ConfigError);
  EXPECT_THROW(init_student(StudentConfig{.cascades = 0}, 0), ConfigError);
  EXPECT_THROW(init_discriminator(DiscriminatorConfig{.extent = 16}, 0), ConfigError);
}

TEST(Student, OutputIsFullResolutionField) {
  const auto params = init_student(StudentConfig{}, 0);
  const auto [m, f] = phantom_pair(32, 0);
  const DisplacementField u = student_forward(m, f, params, StudentConfig{});
  EXPECT_EQ(u.u().shape(), (Shape{3, 32, 32, 32}));
}

TEST(Student, ShapeLadderRejectsIndivisibleExtents) {
  const auto params = init_student(StudentConfig{}, 0);
  const Var x = Var::constant(Tensor(Shape{1, 8, 8, 8}));
  EXPECT_THROW(student_forward(x, x, params, StudentConfig{}), ShapeError);
}

TEST(Student, ZeroFlowHeadGivesZeroField) {
  auto params = init_student(StudentConfig{}, 0);
  zero_flow_heads(params, 1);
  const auto [m, f] = phantom_pair(32, 4);
  const DisplacementField u = student_forward(m, f, params, StudentConfig{});
  for (float v : u.u().data()) ASSERT_EQ(v, 0.0f);
}

// Ratio of the central difference of <u, probe> along a random weight
// direction to the taped directional derivative. Only parameters whose names
// contain `only` are moved.
std::vector<double> directional_ratios(const StudentConfig& cfg, std::int64_t extent, const std::string& only, double h) {
  const auto params = init_student(cfg, 1);
  const auto [m, f] = phantom_pair(extent, 6);
  const Var probe = Var::constant(test::random_tensor({3, extent, extent, extent}, 77));
  auto objective = [&](const ParameterCollection& p) {
    return sum_all(mul(student_forward(Var::constant(m.grid()), Var::constant(f.grid()), p, cfg), probe));
  };
  const auto analytic = grad(objective(params), params.vars());
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    double directional = 0.0;
    std::vector<Tensor> dir;
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir.push_back(test::random_tensor(params[i].value().shape(), child_seed(seed, i)));
      if (params[i].name.find(only) == std::string::npos) dir.back() = Tensor(dir.back().shape(), 0.0f);
      for (std::int64_t j = 0; j < dir[i].numel(); ++j)
        directional += static_cast<double>(analytic[i].value()[j]) * dir[i][j];
    }
    auto shifted = [&](double step) {
      ParameterCollection p = params;
      for (std::size_t i = 0; i < p.size(); ++i) {
        Tensor v = p[i].value();
        for (std::int64_t j = 0; j < v.numel(); ++j) v[j] = static_cast<float>(v[j] + step * dir[i][j]);
        p[i].assign(std::move(v));
      }
      return objective(p.detached()).value().precise_item();
    };
    ratios.push_back((shifted(h) - shifted(-h)) / (2 * h) / directional);
  }
  return ratios;
}

// The flow head is linear in its weights, so the full-size check is tight.
TEST(Student, FlowHeadDirectionalDerivativeAt32) {
  for (double r : directional_ratios(StudentConfig{}, 32, "flow", 1e-3)) EXPECT_NEAR(r, 1.0, 1e-3);
}

// Through every layer, ReLU kinks crossed by the step dominate unless the
// network is small and the step short.
TEST(Student, DirectionalDerivativeThroughAllLayers) {
  for (double r : directional_ratios(StudentConfig{.base_channels = 2}, 16, "", 1e-4)) EXPECT_NEAR(r, 1.0, 1e-2);
}

TEST(Cascade, SingleCascade) {
  const StudentConfig cfg;
  const auto params = init_student(cfg, 2);
  const auto [m, f] = phantom_pair(32, 8);
  const auto out = cascade_forward(Var::constant(m.grid()), Var::constant(f.grid()), params, cfg);
  ASSERT_EQ(out.flows.size(), 1u);
  EXPECT_TRUE(bit_identical(out.total.value(), out.flows[0].value()));
  EXPECT_TRUE(bit_identical(out.warped.value(), warp(m.grid(), out.flows[0].value(), Interp::Trilinear)));
}

TEST(Cascade, ZeroHeadsLeaveImageUnchanged) {
  for (int n : {1, 2, 3}) {
    StudentConfig cfg{.cascades = n};
    auto params = init_student(cfg, 3);
    zero_flow_heads(params, n);
    const auto [m, f] = phantom_pair(32, 10);
    const auto out = cascade_forward(Var::constant(m.grid()), Var::constant(f.grid()), params, cfg);
    for (float v : out.total.value().data()) ASSERT_EQ(v, 0.0f);
    EXPECT_TRUE(bit_identical(out.warped.value(), m.grid()));
  }
}

TEST(Cascade, TwoCascadesMatchSequentialWarp) {
  StudentConfig cfg{.cascades = 2};
  const auto params = init_student(cfg, 4);
  const auto [m, f] = phantom_pair(32, 12);
  const auto out = cascade_forward(Var::constant(m.grid()), Var::constant(f.grid()), params, cfg);
  const Tensor seq = warp(warp(m.grid(), out.flows[0].value(), Interp::Trilinear), out.flows[1].value(), Interp::Trilinear);
  EXPECT_LE(max_abs_diff(out.warped.value(), seq), 0.05f);
  EXPECT_TRUE(bit_identical(out.warped.value(), warp(m.grid(), out.total.value(), Interp::Trilinear)));
}

TEST(Cascade, RegisterPairAgreesWithGraphForward) {
  StudentConfig cfg{.cascades = 2};
  const auto params = init_student(cfg, 5);
  const auto [m, f] = phantom_pair(32, 14);
  const auto reg = register_pair(m, f, params, cfg);
  const auto out = cascade_forward(Var::constant(m.grid()), Var::constant(f.grid()), params, cfg);
  EXPECT_TRUE(bit_identical(reg.field.u(), out.total.value()));
  EXPECT_TRUE(bit_identical(reg.warped.grid(), out.warped.value()));
}

TEST(Discriminator, OutputInOpenUnitInterval) {
  const auto theta = init_discriminator(DiscriminatorConfig{}, 0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SplitMix64 rng(seed);
    const auto u = gen_smooth_field(FieldSpec{}, 32, rng);
    const float m = discriminator_forward(Var::constant(u.u()), theta, DiscriminatorConfig{}).item();
    EXPECT_GT(m, 0.0f);
    EXPECT_LT(m, 1.0f);
  }
}

TEST(Discriminator, IdenticalFieldsScoreIdentically) {
  const auto theta = init_discriminator(DiscriminatorConfig{}, 1);
  const Tensor a = test::random_tensor({3, 16, 16, 16}, 2), b = test::random_tensor({3, 16, 16, 16}, 3);
  const float first = discriminator_forward(Var::constant(a), theta, DiscriminatorConfig{}).item();
  discriminator_forward(Var::constant(b), theta, DiscriminatorConfig{});
  EXPECT_EQ(first, discriminator_forward(Var::constant(a), theta, DiscriminatorConfig{}).item());
}

TEST(Discriminator, ResamplesToConfiguredExtent) {
  const DiscriminatorConfig cfg;
  const auto theta = init_discriminator(cfg, 2);
  EXPECT_NO_THROW(discriminator_forward(Var::constant(test::random_tensor({3, 64, 64, 64}, 4)), theta, cfg));
  EXPECT_THROW(critic_score(Var::constant(test::random_tensor({3, 16, 16, 16}, 4)), theta, cfg), ShapeError);
}

TEST(ParamCount, DefaultStudentIsStable) {
  EXPECT_EQ(param_count(init_student(StudentConfig{}, 0)), 1548643);
}

TEST(ParamCount, LinearInCascades) {
  const auto one = param_count(init_student(StudentConfig{.cascades = 1}, 0));
  for (int n : {2, 3}) EXPECT_EQ(param_count(init_student(StudentConfig{.cascades = n}, 0)), n * one);
}

}  // namespace
}  // namespace aldk
