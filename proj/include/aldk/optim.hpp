#pragma once

#include <cstdint>
#include <vector>

#include "aldk/autodiff.hpp"

namespace aldk {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments are stored in parameter order.
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<Tensor> first;
  std::vector<Tensor> second;

  static AdamState for_params(const ParameterCollection& params, AdamHyper hyper = {});
};

/// Bias-corrected Adam update from the grad slots; clears nothing.
void adam_step(ParameterCollection& params, AdamState& state, double lr);

}  // namespace aldk
