#include "aldk/optim.hpp"

#include <cmath>

#include "aldk/errors.hpp"

namespace aldk {

AdamState AdamState::for_params(const ParameterCollection& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first.emplace_back(p.value().shape(), 0.0f);
    s.second.emplace_back(p.value().shape(), 0.0f);
  }
  return s;
}

void adam_step(ParameterCollection& params, AdamState& state, double lr) {
  if (state.first.size() != params.size() || state.second.size() != params.size())
    throw ConfigError("optimizer state does not match the parameter collection");
  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    if (!m.same_shape(p.grad) || !v.same_shape(p.grad))
      throw ConfigError("optimizer moment shape mismatch for '" + p.name + "'");
    Tensor next = p.value();
    for (std::int64_t j = 0; j < next.numel(); ++j) {
      const double g = p.grad[j];
      const double mj = h.beta1 * m[j] + (1.0 - h.beta1) * g;
      const double vj = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + h.epsilon);
      next[j] = static_cast<float>(next[j] - update);
    }
    p.assign(std::move(next));
  }
}

}  // namespace aldk
