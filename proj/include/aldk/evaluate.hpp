#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "aldk/dataset.hpp"
#include "aldk/networks.hpp"

namespace aldk {

struct PairReport {
  std::size_t index = 0;
  double dice = 0.0;
  double jacc = 0.0;
  std::int64_t folding_count = 0;
  double latency_seconds = 0.0;
};

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct RegistrationReport {
  std::vector<PairReport> pairs;
  Stat dice, jacc, folding_count, latency_seconds;
  std::int64_t param_count = 0;
  nlohmann::json config = nlohmann::json::object();
};

Stat summarize(const std::vector<double>& values);

/// Report JSON carries "schema": 1.
nlohmann::json to_json(const RegistrationReport& report);
RegistrationReport report_from_json(const nlohmann::json& j);

struct EvalOptions {
  int warmup = 1;
  /// Latency is the median of this many timed registrations.
  int repetitions = 5;
};

/// Produces the deformation for a pair; timed as the registration latency.
using Registrar = std::function<DisplacementField(const PairRecord&)>;

RegistrationReport evaluate(const Dataset& dataset, const Registrar& registrar, const EvalOptions& options = {});

/// Evaluates a trained student: nearest-warped moving mask vs. fixed mask.
RegistrationReport evaluate(const ParameterCollection& student, const StudentConfig& config, const Dataset& dataset,
                            const EvalOptions& options = {});

/// Median wall-clock seconds of `repetitions` calls after `warmup` calls.
double median_latency(const std::function<void()>& fn, int warmup, int repetitions);

struct BenchReport {
  int cascades = 1;
  std::int64_t extent = 0;
  std::int64_t param_count = 0;
  double latency_seconds = 0.0;
};

/// Parameter count and registration latency of a freshly initialized student.
BenchReport bench(const StudentConfig& config, std::int64_t extent, int repetitions, std::uint64_t seed = 0);
nlohmann::json to_json(const BenchReport& b);

}  // namespace aldk
