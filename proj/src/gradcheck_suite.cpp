#include "aldk/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "aldk/deformation.hpp"
#include "aldk/losses.hpp"
#include "aldk/networks.hpp"
#include "aldk/ops.hpp"
#include "aldk/rng.hpp"

namespace aldk {
namespace {

Tensor uniform(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Magnitudes in [0.1, 1], random sign: keeps relu inputs off the kink.
Tensor away_from_zero(SplitMix64& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0));
  return t;
}

// Displacements whose sample points land at fractional offsets in
// [0.1, 0.9] strictly inside the grid, away from trilinear kinks and clamps.
Tensor interior_field(SplitMix64& rng, std::int64_t n) {
  Tensor u(Shape{3, n, n, n});
  const std::int64_t vox = n * n * n;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t z = 0, v = 0; z < n; ++z)
      for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t x = 0; x < n; ++x, ++v) {
          const std::int64_t pos = c == 0 ? x : c == 1 ? y : z;
          const double target = static_cast<double>(rng.below(static_cast<std::uint64_t>(n - 1))) + rng.uniform(0.1, 0.9);
          u[c * vox + v] = static_cast<float>(target - static_cast<double>(pos));
        }
  return u;
}

DiscriminatorConfig toy_critic() {
  DiscriminatorConfig c;
  c.extent = 8;
  c.channels = {2, 3, 4};
  return c;
}

ParameterCollection with_vars(const ParameterCollection& like, std::span<const Var> vars, std::size_t offset) {
  ParameterCollection out = like;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].var = vars[offset + i];
  return out;
}

std::vector<Tensor> values(const ParameterCollection& p) {
  std::vector<Tensor> v;
  for (const auto& q : p) v.push_back(q.value());
  return v;
}

// Hidden pre-activations of the toy critic for `field`; the last entry is
// the sigmoid layer.
std::vector<Tensor> pre_activations(const Tensor& field, const ParameterCollection& theta, const DiscriminatorConfig& c) {
  std::vector<Tensor> out;
  Var x = resample_field(Var::constant(field), c.extent);
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    const std::string name = "disc.conv" + std::to_string(i);
    x = conv3d(x, theta.at(name + ".weight").var.detach(), theta.at(name + ".bias").var.detach(), c.stride);
    out.push_back(x.value());
    x = relu(x);
  }
  return out;
}

float relu_margin(const Tensor& field, const ParameterCollection& theta, const DiscriminatorConfig& c) {
  const auto pre = pre_activations(field, theta, c);
  float m = INFINITY;
  for (std::size_t l = 0; l + 1 < pre.size(); ++l)
    for (float v : pre[l].data()) m = std::min(m, std::abs(v));
  return m;
}

struct CriticDraw {
  ParameterCollection theta;
  Tensor student, teacher;
};

// Float32 evaluation noise swamps central differences unless the critic's
// input gradients are O(1) and its sigmoid is unsaturated, so weights are
// drawn wider than at initialization and the output bias centres the
// student's score. Redraws until every field the critic sees (student,
// teacher and their mix) keeps hidden units off the relu kink.
CriticDraw draw_critic_case(std::uint64_t seed, std::int64_t field_extent, float beta) {
  const DiscriminatorConfig cfg = toy_critic();
  const Shape fs{3, field_extent, field_extent, field_extent};
  const std::string last = "disc.conv" + std::to_string(cfg.channels.size() - 1) + ".bias";
  for (std::uint64_t attempt = 0;; ++attempt) {
    SplitMix64 rng(child_seed(seed, 1000 + attempt));
    CriticDraw d{init_discriminator(cfg, rng.next()), uniform(rng, fs), uniform(rng, fs)};
    for (auto& p : d.theta) {
      const bool bias = p.name.find("bias") != std::string::npos;
      p.assign(uniform(rng, p.value().shape(), bias ? -0.2 : -1.0, bias ? 0.2 : 1.0));
    }
    Tensor centred = d.theta.at(last).value();
    const Tensor z = pre_activations(d.student, d.theta, cfg).back();
    for (std::int64_t i = 0; i < centred.numel(); ++i) centred[i] -= z[i];
    d.theta.at(last).assign(centred);
    Tensor mix(fs);
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = beta * d.teacher[i] + (1 - beta) * d.student[i];
    const float m = std::min({relu_margin(d.student, d.theta, cfg), relu_margin(d.teacher, d.theta, cfg),
                              relu_margin(mix, d.theta, cfg)});
    if (m > 0.03f) return d;
  }
}

using Case = std::function<SuiteResult(std::uint64_t)>;

SuiteResult check(const std::string& name, std::uint64_t seed, const ScalarFunction& f, const std::vector<Tensor>& point) {
  GradCheckOptions opt;
  opt.seed = seed;
  return {name, seed, fd_check(f, point, opt)};
}

// Weighted sum so every output entry carries an O(1) gradient.
Var weighted(const Var& out, const Tensor& w) { return sum_all(mul(out, Var::constant(w))); }

std::vector<std::pair<std::string, Case>> cases() {
  std::vector<std::pair<std::string, Case>> c;

  c.emplace_back("conv3d", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {3, 2, 2, 2});
    return check("conv3d", seed,
                 [w](std::span<const Var> a) { return weighted(conv3d(a[0], a[1], a[2], 2), w); },
                 {uniform(rng, {2, 4, 4, 4}), uniform(rng, {3, 2, 4, 4, 4}), uniform(rng, {3})});
  });
  c.emplace_back("conv3d_stride1", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {2, 4, 4, 4});
    return check("conv3d_stride1", seed,
                 [w](std::span<const Var> a) { return weighted(conv3d(a[0], a[1], 1), w); },
                 {uniform(rng, {2, 4, 4, 4}), uniform(rng, {2, 2, 3, 3, 3})});
  });
  c.emplace_back("tconv3d", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {2, 4, 4, 4});
    return check("tconv3d", seed,
                 [w](std::span<const Var> a) { return weighted(tconv3d(a[0], a[1], a[2], 2), w); },
                 {uniform(rng, {3, 2, 2, 2}), uniform(rng, {3, 2, 4, 4, 4}), uniform(rng, {2})});
  });
  c.emplace_back("conv3d_kernel_grad", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {2, 2, 4, 4, 4});
    return check("conv3d_kernel_grad", seed,
                 [w](std::span<const Var> a) { return weighted(conv3d_kernel_grad(a[0], a[1], 4, 2), w); },
                 {uniform(rng, {2, 4, 4, 4}), uniform(rng, {2, 2, 2, 2})});
  });
  c.emplace_back("relu", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {4, 2, 2, 2});
    return check("relu", seed, [w](std::span<const Var> a) { return weighted(relu(a[0]), w); },
                 {away_from_zero(rng, {4, 2, 2, 2})});
  });
  c.emplace_back("sigmoid", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {4, 2, 2, 2});
    return check("sigmoid", seed, [w](std::span<const Var> a) { return weighted(sigmoid(a[0]), w); },
                 {uniform(rng, {4, 2, 2, 2}, -3.0, 3.0)});
  });
  c.emplace_back("elementwise", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    return check("elementwise", seed,
                 [](std::span<const Var> a) {
                   const Var q = div(sub(mul(a[0], a[1]), affine(a[0], 0.5f, 0.1f)), a[2]);
                   return add(mean_all(q), l2_norm(add(a[0], a[1])));
                 },
                 {uniform(rng, {2, 3}), uniform(rng, {2, 3}), uniform(rng, {2, 3}, 0.5, 2.0)});
  });
  c.emplace_back("channels", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {5, 2, 2, 2});
    return check("channels", seed,
                 [w](std::span<const Var> a) { return weighted(add_channel_bias(concat_channels(a[0], a[1]), a[2]), w); },
                 {uniform(rng, {2, 2, 2, 2}), uniform(rng, {3, 2, 2, 2}), uniform(rng, {5})});
  });
  c.emplace_back("warp", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {2, 5, 5, 5});
    return check("warp", seed, [w](std::span<const Var> a) { return weighted(warp(a[0], a[1]), w); },
                 {uniform(rng, {2, 5, 5, 5}), interior_field(rng, 5)});
  });
  c.emplace_back("compose", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {3, 5, 5, 5});
    return check("compose", seed, [w](std::span<const Var> a) { return weighted(compose(a[0], a[1]), w); },
                 {uniform(rng, {3, 5, 5, 5}), interior_field(rng, 5)});
  });
  c.emplace_back("resample_field", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {3, 4, 4, 4});
    return check("resample_field", seed, [w](std::span<const Var> a) { return weighted(resample_field(a[0], 4), w); },
                 {uniform(rng, {3, 8, 8, 8})});
  });
  c.emplace_back("covariance", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    return check("covariance", seed, [](std::span<const Var> a) { return covariance(a[0], a[1]); },
                 {uniform(rng, {1, 8, 8, 8}), uniform(rng, {1, 8, 8, 8})});
  });
  c.emplace_back("rec_loss", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    return check("rec_loss", seed, [](std::span<const Var> a) { return rec_loss(a[0], a[1]); },
                 {uniform(rng, {1, 8, 8, 8}), uniform(rng, {1, 8, 8, 8})});
  });
  c.emplace_back("joint_deformation", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    const Tensor w = uniform(rng, {3, 8, 8, 8});
    return check("joint_deformation", seed,
                 [w](std::span<const Var> a) { return weighted(joint_deformation(a[0], a[1], 0.1f), w); },
                 {uniform(rng, {3, 8, 8, 8}), uniform(rng, {3, 8, 8, 8})});
  });
  c.emplace_back("adv_loss", [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    return check("adv_loss", seed,
                 [](std::span<const Var> a) { return adv_loss(rec_loss(a[0], a[1]), mean_all(square(a[2])), 0.5f); },
                 {uniform(rng, {1, 8, 8, 8}), uniform(rng, {1, 8, 8, 8}), uniform(rng, {3, 2, 2, 2})});
  });
  c.emplace_back("dis_loss_wrt_student", [](std::uint64_t seed) {
    const auto d = draw_critic_case(seed, 8, 0.1f);
    const auto cfg = toy_critic();
    const auto theta = d.theta;
    return check("dis_loss_wrt_student", seed,
                 [=](std::span<const Var> a) { return dis_loss(a[0], Var::constant(d.teacher), theta, cfg, 0.1f, 1.0f); },
                 {d.student});
  });
  c.emplace_back("gradient_penalty_wrt_theta", [](std::uint64_t seed) {
    const auto d = draw_critic_case(seed, 8, 0.1f);
    const auto cfg = toy_critic();
    const auto like = d.theta;
    Tensor mix(d.student.shape());
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = 0.1f * d.teacher[i] + 0.9f * d.student[i];
    return check("gradient_penalty_wrt_theta", seed,
                 [=](std::span<const Var> a) { return gradient_penalty(Var::constant(mix), with_vars(like, a, 0), cfg); },
                 values(d.theta));
  });
  c.emplace_back("critic_loss_wrt_theta", [](std::uint64_t seed) {
    const auto d = draw_critic_case(seed, 8, 0.1f);
    const auto cfg = toy_critic();
    const auto like = d.theta;
    return check("critic_loss_wrt_theta", seed,
                 [=](std::span<const Var> a) {
                   return critic_loss(Var::constant(d.student), Var::constant(d.teacher), with_vars(like, a, 0), cfg,
                                      0.1f, 1.0f);
                 },
                 values(d.theta));
  });
  return c;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(int seeds) {
  std::vector<SuiteResult> out;
  for (const auto& [name, run] : cases())
    for (int s = 0; s < seeds; ++s) out.push_back(run(static_cast<std::uint64_t>(s) + 1));
  return out;
}

}  // namespace aldk
