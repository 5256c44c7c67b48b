#pragma once

#include <functional>
#include <span>
#include <vector>

#include "aldk/autodiff.hpp"

namespace aldk {

struct GradCheckOptions {
  float step = 1e-3f;
  double tolerance = 1e-2;
  /// Entries whose gradients are tiny compared with the largest one in the
  /// same argument are compared against this fraction of that maximum.
  double floor_fraction = 0.1;
  /// Check at most this many entries per argument (0 = all), sampled with `seed`.
  std::int64_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct ArgumentCheck {
  std::size_t argument = 0;
  std::int64_t checked = 0;
  double max_rel_error = 0.0;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ArgumentCheck> arguments;
  double max_rel_error = 0.0;
  bool passed = true;
};

using ScalarFunction = std::function<Var(std::span<const Var>)>;

/// Compares recorded gradients of `f` at `point` against central differences.
GradCheckReport fd_check(const ScalarFunction& f, const std::vector<Tensor>& point,
                         const GradCheckOptions& options = {});

}  // namespace aldk
