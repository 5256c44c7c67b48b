#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aldk/gradcheck.hpp"

namespace aldk {

struct SuiteResult {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// Central-difference checks of every differentiable op and loss at toy
/// sizes (h = 1e-3, relative tolerance 1e-2), one run per seed.
std::vector<SuiteResult> run_gradcheck_suite(int seeds = 5);

}  // namespace aldk
