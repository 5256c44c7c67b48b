#include <cmath>
#include <filesystem>
#include <set>

#include "aldk/checkpoint.hpp"
#include "aldk/errors.hpp"
#include "aldk/training.hpp"
#include "aldk/vol_io.hpp"
#include "test_util.hpp"

namespace aldk {
namespace {

ParameterCollection scalar_param(float w) {
  ParameterCollection p;
  p.add("w", Tensor::scalar(w));
  return p;
}

// d/dw of w^2 into the slot.
void quadratic_grad(ParameterCollection& p) { p[0].grad[0] = 2.0f * p[0].value()[0]; }

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = scalar_param(0.75f);
  auto s = AdamState::for_params(p);
  adam_step(p, s, 0.1);
  EXPECT_EQ(p[0].value()[0], 0.75f);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepOnQuadratic) {
  auto p = scalar_param(1.0f);
  auto s = AdamState::for_params(p);
  quadratic_grad(p);
  adam_step(p, s, 0.1);
  EXPECT_NEAR(p[0].value()[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-7);
}

TEST(Adam, ConvergesOnQuadratic) {
  auto p = scalar_param(1.0f);
  auto s = AdamState::for_params(p);
  for (int i = 0; i < 200; ++i) {
    quadratic_grad(p);
    adam_step(p, s, 0.1);
  }
  EXPECT_LT(std::abs(p[0].value()[0]), 1e-2);
}

TEST(Adam, RejectsMismatchedState) {
  auto p = scalar_param(1.0f);
  AdamState empty;
  EXPECT_THROW(adam_step(p, empty, 0.1), ConfigError);
  ParameterCollection other;
  other.add("w", Tensor({2}, 0.0f));
  auto s = AdamState::for_params(other);
  EXPECT_THROW(adam_step(p, s, 0.1), ConfigError);
}

constexpr std::int64_t kExtent = 16;

TrainConfig small_config() {
  TrainConfig c;
  c.batch = 2;
  c.n_gen = 3;
  c.iterations = 2;
  c.seed = 11;
  c.extent = kExtent;
  c.student.base_channels = 4;
  c.discriminator = DiscriminatorConfig{.extent = 16, .channels = {8, 16, 16, 16}};
  return c;
}

struct Fixture {
  Dataset data = make_dataset(PhantomSpec{.extent = kExtent}, FieldSpec{.amplitude = 2.0}, 5, 21);
  std::unique_ptr<TeacherProvider> teacher = teacher_from_ground_truth(data);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

TEST(Training, StepAccounting) {
  auto c = small_config();
  c.iterations = 1;
  const auto r = train(c, fixture().data, *fixture().teacher);
  EXPECT_EQ(r.state.student_opt.step, c.n_gen + 1);
  EXPECT_EQ(r.state.critic_opt.step, 1);
  EXPECT_EQ(r.state.iteration, 1);
  EXPECT_EQ(r.state.samples_drawn, static_cast<std::uint64_t>((c.n_gen + 1) * c.batch));
  ASSERT_EQ(r.log.size(), 1u);
}

TEST(Training, RecOnlyNeverTouchesCritic) {
  auto c = small_config();
  c.adversarial = false;
  c.iterations = 1;
  const auto r = train(c, fixture().data, *fixture().teacher);
  EXPECT_EQ(r.state.student_opt.step, c.n_gen + 1);
  EXPECT_EQ(r.state.critic_opt.step, 0);
}

void expect_same_params(const ParameterCollection& a, const ParameterCollection& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    const auto& x = a[i].value().data();
    const auto& y = b[i].value().data();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << a[i].name;
  }
}

TEST(Training, PureReconstructionWeightMatchesRecOnlyBitExactly) {
  auto aldk = small_config();
  aldk.weights = {.gamma = 1.0f, .beta = 0.0f, .lambda = 1.0f};
  auto rec = aldk;
  rec.adversarial = false;
  const auto a = train(aldk, fixture().data, *fixture().teacher);
  const auto b = train(rec, fixture().data, *fixture().teacher);
  expect_same_params(a.state.student, b.state.student);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].rec, b.log[i].rec);
    EXPECT_EQ(a.log[i].adv, b.log[i].adv);
  }
  // The critic still trains in the adversarial run.
  EXPECT_EQ(a.state.critic_opt.step, aldk.iterations);
}

TEST(Training, Deterministic) {
  const auto c = small_config();
  const auto a = train(c, fixture().data, *fixture().teacher);
  const auto b = train(c, fixture().data, *fixture().teacher);
  EXPECT_EQ(a.log, b.log);
  expect_same_params(a.state.student, b.state.student);
  expect_same_params(a.state.critic, b.state.critic);
}

TEST(Training, CriticStepSizeDefaultsToStudentStepSize) {
  auto c = small_config();
  const auto a = train(c, fixture().data, *fixture().teacher);
  c.critic_learning_rate = c.learning_rate;
  const auto b = train(c, fixture().data, *fixture().teacher);
  EXPECT_EQ(a.log, b.log);
  expect_same_params(a.state.critic, b.state.critic);
  c.critic_learning_rate = c.learning_rate * 0.1;
  const auto d = train(c, fixture().data, *fixture().teacher);
  // The first critic step happens after the first student phases.
  EXPECT_EQ(d.log.front().rec, a.log.front().rec);
  EXPECT_NE(to_json(d.log), to_json(a.log));
}

TEST(Training, ParametersAndMomentsStayFinite) {
  const auto r = train(small_config(), fixture().data, *fixture().teacher);
  auto finite = [](const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
  };
  for (const auto* c : {&r.state.student, &r.state.critic})
    for (const auto& p : *c) EXPECT_TRUE(finite(p.value())) << p.name;
  for (const auto* o : {&r.state.student_opt, &r.state.critic_opt})
    for (std::size_t i = 0; i < o->first.size(); ++i) EXPECT_TRUE(finite(o->first[i]) && finite(o->second[i]));
}

TEST(Training, DivergenceAbortsWithIteration) {
  auto c = small_config();
  c.learning_rate = 1e30;
  c.iterations = 5;
  try {
    train(c, fixture().data, *fixture().teacher);
    FAIL() << "expected divergence";
  } catch (const NonFiniteLossError& e) {
    EXPECT_GE(e.iteration(), 0);
    EXPECT_LT(e.iteration(), 5);
  } catch (const DegenerateImageError&) {
    // A field large enough to clamp every sample flattens the warped image.
  }
}

TEST(Training, SamplerCoversEachEpochWithoutReplacement) {
  auto c = small_config();
  c.batch = 3;
  Trainer t(initial_state(c), fixture().data, *fixture().teacher);
  const std::size_t n = fixture().data.size();
  std::vector<std::size_t> drawn;
  while (drawn.size() < 3 * n) {
    auto b = t.next_batch();
    drawn.insert(drawn.end(), b.begin(), b.end());
  }
  for (std::size_t e = 0; e < 3; ++e) {
    std::set<std::size_t> epoch(drawn.begin() + e * n, drawn.begin() + (e + 1) * n);
    EXPECT_EQ(epoch.size(), n) << "epoch " << e;
  }
  EXPECT_FALSE(std::equal(drawn.begin(), drawn.begin() + n, drawn.begin() + n)) << "epochs should be reshuffled";
}

TEST(Training, RejectsMismatchedTeacher) {
  const auto c = small_config();
  std::vector<DisplacementField> fields;
  for (std::size_t i = 0; i < fixture().data.size(); ++i) fields.push_back(DisplacementField::zeros({8, 8, 8}));
  EXPECT_THROW(Trainer(initial_state(c), fixture().data, FieldListTeacher(fields)), ShapeError);
  fields.pop_back();
  EXPECT_THROW(Trainer(initial_state(c), fixture().data, FieldListTeacher(fields)), ConfigError);
  Dataset empty;
  EXPECT_THROW(Trainer(initial_state(c), empty, FieldListTeacher({})), ConfigError);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  auto c = small_config();
  c.weights.beta = 0.25f;
  c.penalty_to_student = true;
  EXPECT_TRUE(to_json(c).at("critic_learning_rate").is_null());
  c.critic_learning_rate = 3e-5;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.critic_learning_rate, 3e-5);
  EXPECT_EQ(train_config_from_json(nlohmann::json::object()).batch, 4);

  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& t) { t.batch = 0; }, [](TrainConfig& t) { t.n_gen = 0; },
           [](TrainConfig& t) { t.iterations = 0; }, [](TrainConfig& t) { t.learning_rate = 0; },
           [](TrainConfig& t) { t.critic_learning_rate = -1.0; },
           [](TrainConfig& t) { t.extent = 24; }, [](TrainConfig& t) { t.weights.gamma = 2.0f; }}) {
    auto bad = c;
    mutate(bad);
    EXPECT_THROW(validate(bad), ConfigError);
  }
  EXPECT_THROW(train_config_from_json({{"batch", "four"}}), ConfigError);
}

TEST(LossLogJson, RoundTrip) {
  const auto r = train(small_config(), fixture().data, *fixture().teacher);
  EXPECT_EQ(loss_log_from_json(to_json(r.log)), r.log);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "aldk_checkpoint_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(CheckpointTest, SaveLoadSaveIsIdempotent) {
  const auto r = train(small_config(), fixture().data, *fixture().teacher);
  save_checkpoint(dir / "a.ckpt", r.state);
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(dir / "b.ckpt", loaded);
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));
  expect_same_params(loaded.student, r.state.student);
  EXPECT_EQ(loaded.iteration, r.state.iteration);
  EXPECT_EQ(loaded.samples_drawn, r.state.samples_drawn);
  EXPECT_EQ(loaded.student_opt.step, r.state.student_opt.step);
}

TEST_F(CheckpointTest, ResumeMatchesUnbrokenRun) {
  auto c = small_config();
  c.iterations = 3;
  const auto full = train(c, fixture().data, *fixture().teacher);

  auto first = c;
  first.iterations = 1;
  const auto head = train(first, fixture().data, *fixture().teacher);
  save_checkpoint(dir / "k.ckpt", head.state);
  Trainer resumed(load_checkpoint(dir / "k.ckpt"), fixture().data, *fixture().teacher);
  auto log = head.log;
  for (const auto& r : resumed.run_until(3)) log.push_back(r);
  EXPECT_EQ(log, full.log);
  expect_same_params(resumed.state().student, full.state.student);
  expect_same_params(resumed.state().critic, full.state.critic);
}

TEST_F(CheckpointTest, CorruptionIsTyped) {
  const auto bytes = encode_checkpoint(initial_state(small_config()));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_checkpoint(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "decoded corrupt checkpoint";
    return FormatError::Kind::Schema;
  };
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), FormatError::Kind::BadMagic);
  auto version = bytes;
  version[4] = 99;
  EXPECT_EQ(kind_of(version), FormatError::Kind::BadVersion);
  EXPECT_EQ(kind_of({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)}),
            FormatError::Kind::Truncated);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

}  // namespace
}  // namespace aldk
