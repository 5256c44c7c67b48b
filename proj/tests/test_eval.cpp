#include <algorithm>
#include <cmath>

#include "aldk/errors.hpp"
#include "aldk/evaluate.hpp"
#include "aldk/metrics.hpp"
#include "test_util.hpp"

namespace aldk {
namespace {

Tensor mask_from(std::initializer_list<int> on, std::int64_t n = 8) {
  Tensor t({1, 1, 1, n}, 0.0f);
  for (int i : on) t[i] = 1.0f;
  return t;
}

TEST(Metrics, DiceAndJaccHandCases) {
  const Tensor a = mask_from({0, 1, 2, 3}), b = mask_from({2, 3, 4, 5});
  EXPECT_EQ(dice(a, b), 0.5);
  EXPECT_NEAR(jacc(a, b), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(jacc(a, a), 1.0);
  EXPECT_EQ(dice(a, mask_from({4, 5})), 0.0);
  EXPECT_EQ(jacc(a, mask_from({4, 5})), 0.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(dice(mask_from({}), mask_from({})), ConfigError);
  EXPECT_THROW(jacc(mask_from({}), mask_from({})), ConfigError);
  EXPECT_THROW(dice(mask_from({1}), mask_from({1}, 4)), ShapeError);
}

TEST(Metrics, IdentityAndOrderingOverRandomMasks) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    Tensor a({1, 4, 4, 4}, 0.0f), b({1, 4, 4, 4}, 0.0f);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      a[i] = rng.uniform() < pa ? 1.0f : 0.0f;
      b[i] = rng.uniform() < pb ? 1.0f : 0.0f;
    }
    auto empty = [](const Tensor& t) { return std::all_of(t.data().begin(), t.data().end(), [](float v) { return v == 0.0f; }); };
    if (empty(a) && empty(b)) continue;
    const double d = dice(a, b), j = jacc(a, b);
    ASSERT_GE(j, 0.0);
    ASSERT_LE(d, 1.0);
    ASSERT_NEAR(d, 2.0 * j / (1.0 + j), 1e-12);
    if (d == 0.0 || d == 1.0)
      ASSERT_EQ(j, d);
    else
      ASSERT_LT(j, d);
  }
}

TEST(Summaries, MeanAndPopulationStd) {
  const Stat s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(1.25));
  EXPECT_EQ(summarize({}).mean, 0.0);
}

struct EvalFixture {
  Dataset data = make_dataset(PhantomSpec{.extent = 16}, FieldSpec{.amplitude = 2.0}, 4, 31);
};

const Dataset& eval_data() {
  static EvalFixture f;
  return f.data;
}

EvalOptions quick() { return {.warmup = 0, .repetitions = 1}; }

TEST(Evaluate, GroundTruthIsTheUpperBound) {
  const auto r = evaluate(eval_data(), [](const PairRecord& p) { return p.ground_truth; }, quick());
  ASSERT_EQ(r.pairs.size(), eval_data().size());
  for (const auto& p : r.pairs) {
    EXPECT_EQ(p.dice, 1.0);
    EXPECT_EQ(p.jacc, 1.0);
    EXPECT_EQ(p.folding_count, 0);
    EXPECT_GT(p.latency_seconds, 0.0);
  }
}

TEST(Evaluate, ZeroFieldModelGivesUnregisteredDice) {
  StudentConfig cfg{.base_channels = 4};
  auto student = init_student(cfg, 3);
  for (const char* part : {"flow.weight", "flow.bias"}) {
    auto& p = student.at(cascade_prefix(0) + part);
    p.assign(Tensor(p.value().shape(), 0.0f));
  }
  const auto r = evaluate(student, cfg, eval_data(), quick());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& pair = eval_data().pairs[i];
    EXPECT_EQ(r.pairs[i].dice, dice(pair.moving_mask, pair.fixed_mask));
    EXPECT_EQ(r.pairs[i].folding_count, 0);
  }
  EXPECT_EQ(r.param_count, param_count(student));
  EXPECT_EQ(r.config.at("base_channels"), 4);
}

TEST(Evaluate, AggregatesArePerPairMeans) {
  const StudentConfig cfg{.base_channels = 4};
  const auto r = evaluate(init_student(cfg, 5), cfg, eval_data(), quick());
  double dice_sum = 0.0, jacc_sum = 0.0, fold_sum = 0.0;
  for (const auto& p : r.pairs) {
    dice_sum += p.dice;
    jacc_sum += p.jacc;
    fold_sum += static_cast<double>(p.folding_count);
    EXPECT_LE(p.jacc, p.dice);
    EXPECT_NEAR(p.dice, 2.0 * p.jacc / (1.0 + p.jacc), 1e-12);
  }
  const double n = static_cast<double>(r.pairs.size());
  EXPECT_NEAR(r.dice.mean, dice_sum / n, 1e-15);
  EXPECT_NEAR(r.jacc.mean, jacc_sum / n, 1e-15);
  EXPECT_NEAR(r.folding_count.mean, fold_sum / n, 1e-12);
}

TEST(Evaluate, DeterministicApartFromLatency) {
  const StudentConfig cfg{.base_channels = 4};
  const auto student = init_student(cfg, 6);
  const auto a = evaluate(student, cfg, eval_data(), quick());
  const auto b = evaluate(student, cfg, eval_data(), quick());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].dice, b.pairs[i].dice);
    EXPECT_EQ(a.pairs[i].folding_count, b.pairs[i].folding_count);
  }
}

TEST(Evaluate, RejectsWrongExtents) {
  EXPECT_THROW(evaluate(eval_data(), [](const PairRecord&) { return DisplacementField::zeros({32, 32, 32}); }, quick()),
               ShapeError);
}

TEST(Report, JsonRoundTrip) {
  const StudentConfig cfg{.base_channels = 4};
  const auto r = evaluate(init_student(cfg, 7), cfg, eval_data(), quick());
  const auto j = to_json(r);
  EXPECT_EQ(j.at("schema"), 1);
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  auto wrong = j;
  wrong["schema"] = 2;
  EXPECT_THROW(report_from_json(wrong), FormatError);
  wrong.erase("schema");
  EXPECT_THROW(report_from_json(wrong), FormatError);
}

TEST(Bench, ReportsParamsAndPositiveLatency) {
  const auto b = bench(StudentConfig{.base_channels = 4}, 16, 1);
  EXPECT_EQ(b.param_count, param_count(init_student(StudentConfig{.base_channels = 4}, 0)));
  EXPECT_GT(b.latency_seconds, 0.0);
  EXPECT_EQ(to_json(b).at("cascades"), 1);
}

}  // namespace
}  // namespace aldk
