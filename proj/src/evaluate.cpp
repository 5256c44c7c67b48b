#include "aldk/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "aldk/errors.hpp"
#include "aldk/metrics.hpp"
#include "aldk/phantom.hpp"

namespace aldk {

using nlohmann::json;

Stat summarize(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

namespace {

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }
Stat stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

json to_json(const RegistrationReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"index", p.index},
                     {"dice", p.dice},
                     {"jacc", p.jacc},
                     {"folding_count", p.folding_count},
                     {"latency_seconds", p.latency_seconds}});
  return {{"schema", 1},
          {"pairs", pairs},
          {"aggregate",
           {{"dice", stat_json(r.dice)},
            {"jacc", stat_json(r.jacc)},
            {"folding_count", stat_json(r.folding_count)},
            {"latency_seconds", stat_json(r.latency_seconds)}}},
          {"param_count", r.param_count},
          {"config", r.config}};
}

RegistrationReport report_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw FormatError(FormatError::Kind::Schema, "unsupported report schema");
    RegistrationReport r;
    for (const auto& p : j.at("pairs"))
      r.pairs.push_back({p.at("index").get<std::size_t>(), p.at("dice").get<double>(), p.at("jacc").get<double>(),
                         p.at("folding_count").get<std::int64_t>(), p.at("latency_seconds").get<double>()});
    const auto& a = j.at("aggregate");
    r.dice = stat_from(a.at("dice"));
    r.jacc = stat_from(a.at("jacc"));
    r.folding_count = stat_from(a.at("folding_count"));
    r.latency_seconds = stat_from(a.at("latency_seconds"));
    r.param_count = j.at("param_count").get<std::int64_t>();
    r.config = j.at("config");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::Schema, std::string("bad report: ") + e.what());
  }
}

double median_latency(const std::function<void()>& fn, int warmup, int repetitions) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> times;
  for (int i = 0; i < std::max(repetitions, 1); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  return std::max(median, 1e-9);
}

RegistrationReport evaluate(const Dataset& dataset, const Registrar& registrar, const EvalOptions& options) {
  RegistrationReport report;
  std::vector<double> dices, jaccs, folds, latencies;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const PairRecord& pair = dataset.pairs[i];
    DisplacementField field = registrar(pair);
    if (field.spatial() != pair.moving.spatial())
      throw ShapeError("registration of pair " + std::to_string(i) + " returned extents " + to_string(field.spatial()));
    PairReport p;
    p.index = i;
    p.latency_seconds = median_latency([&] { (void)registrar(pair); }, options.warmup, options.repetitions);
    const MaskVolume warped = warp(pair.moving_mask, field);
    p.dice = dice(warped, pair.fixed_mask);
    p.jacc = jacc(warped, pair.fixed_mask);
    p.folding_count = folding_count(field);
    dices.push_back(p.dice);
    jaccs.push_back(p.jacc);
    folds.push_back(static_cast<double>(p.folding_count));
    latencies.push_back(p.latency_seconds);
    report.pairs.push_back(p);
  }
  report.dice = summarize(dices);
  report.jacc = summarize(jaccs);
  report.folding_count = summarize(folds);
  report.latency_seconds = summarize(latencies);
  return report;
}

RegistrationReport evaluate(const ParameterCollection& student, const StudentConfig& config, const Dataset& dataset,
                            const EvalOptions& options) {
  const ParameterCollection frozen = student.detached();
  RegistrationReport report = evaluate(
      dataset, [&](const PairRecord& p) { return register_pair(p.moving, p.fixed, frozen, config).field; }, options);
  report.param_count = param_count(student);
  report.config = {{"cascades", config.cascades},
                   {"base_channels", config.base_channels},
                   {"levels", config.levels},
                   {"kernel", config.kernel},
                   {"stride", config.stride}};
  return report;
}

BenchReport bench(const StudentConfig& config, std::int64_t extent, int repetitions, std::uint64_t seed) {
  const ParameterCollection params = init_student(config, seed).detached();
  PhantomSpec spec;
  spec.extent = extent;
  spec.seed = seed;
  const Phantom a = gen_phantom(spec);
  spec.seed = seed + 1;
  const Phantom b = gen_phantom(spec);
  BenchReport r;
  r.cascades = config.cascades;
  r.extent = extent;
  r.param_count = param_count(params);
  r.latency_seconds = median_latency([&] { (void)register_pair(a.image, b.image, params, config); }, 1, repetitions);
  return r;
}

json to_json(const BenchReport& b) {
  return {{"schema", 1},
          {"cascades", b.cascades},
          {"extent", b.extent},
          {"param_count", b.param_count},
          {"latency_seconds", b.latency_seconds}};
}

}  // namespace aldk
