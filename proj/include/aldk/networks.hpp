#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aldk/autodiff.hpp"
#include "aldk/deformation.hpp"

namespace aldk {

/// Light-weight encoder/decoder flow predictor, one parameter set per cascade.
struct StudentConfig {
  int base_channels = 16;
  int levels = 4;
  int kernel = 4;
  int stride = 2;
  int cascades = 1;
};

struct DiscriminatorConfig {
  /// Fields are resampled to extent^3 before the first layer.
  std::int64_t extent = 32;
  std::vector<int> channels{16, 32, 64, 128, 256};
  int kernel = 4;
  int stride = 2;
};

void validate(const StudentConfig& config);
void validate(const DiscriminatorConfig& config);

/// Uniform Glorot weights, zero biases, deterministic in `seed`.
ParameterCollection init_student(const StudentConfig& config, std::uint64_t seed);
ParameterCollection init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

/// Name prefix of cascade k's parameters.
std::string cascade_prefix(int cascade);

/// One cascade: (moving, fixed) [1,D,H,W] -> [3,D,H,W] displacement.
Var student_forward(const Var& moving, const Var& fixed, const ParameterCollection& params,
                    const StudentConfig& config, int cascade = 0);
DisplacementField student_forward(const Volume& moving, const Volume& fixed, const ParameterCollection& params,
                                  const StudentConfig& config, int cascade = 0);

struct CascadeOutput {
  std::vector<Var> flows;  // per-cascade predictions in application order
  Var total;               // composition of all flows
  Var warped;              // moving image warped by `total`
};

CascadeOutput cascade_forward(const Var& moving, const Var& fixed, const ParameterCollection& params,
                              const StudentConfig& config);

/// Inference without recording gradients.
struct Registration {
  DisplacementField field;
  Volume warped;
};
Registration register_pair(const Volume& moving, const Volume& fixed, const ParameterCollection& params,
                           const StudentConfig& config);

/// Mean sigmoid feature M of a field already at the discriminator's extent.
Var critic_score(const Var& field_at_extent, const ParameterCollection& theta, const DiscriminatorConfig& config);
/// Resamples the field to the configured extent, then scores it.
Var discriminator_forward(const Var& field, const ParameterCollection& theta, const DiscriminatorConfig& config);

}  // namespace aldk
