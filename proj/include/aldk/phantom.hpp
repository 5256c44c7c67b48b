#pragma once

#include <cstdint>

#include "aldk/deformation.hpp"
#include "aldk/rng.hpp"

namespace aldk {

/// Smooth synthetic volume: Gaussian blobs plus a soft-edged ellipsoid
/// "organ" whose interior is the segmentation mask.
struct PhantomSpec {
  std::int64_t extent = 32;
  int blob_count = 6;
  double blob_amplitude_min = 0.3, blob_amplitude_max = 1.0;
  double blob_width_min = 2.0, blob_width_max = 5.0;        // Gaussian sigma, voxels
  double organ_axis_min = 0.12, organ_axis_max = 0.25;      // semi-axes, fraction of extent
  double organ_intensity_min = 0.6, organ_intensity_max = 1.0;
  std::uint64_t seed = 0;
};

/// Random control-grid displacements upsampled to the full grid and scaled
/// down until every finite-difference derivative is at most `max_derivative`.
struct FieldSpec {
  int control_extent = 4;
  double amplitude = 3.0;  // voxels
  double max_derivative = 0.4;
};

void validate(const PhantomSpec& spec);
void validate(const FieldSpec& spec);

struct Phantom {
  Volume image;
  MaskVolume mask;
};

Phantom gen_phantom(const PhantomSpec& spec);
DisplacementField gen_smooth_field(const FieldSpec& spec, std::int64_t extent, SplitMix64& stream);

/// Largest |du_i/dx_j| under the finite differences used for Jacobians.
double max_abs_derivative(const DisplacementField& field);

struct PairRecord {
  Volume moving;
  Volume fixed;
  MaskVolume moving_mask;
  MaskVolume fixed_mask;
  DisplacementField ground_truth;
};

/// fixed = warp(moving, ground_truth); fixed_mask = nearest warp of the moving mask.
PairRecord make_pair(const PhantomSpec& spec, const FieldSpec& field_spec, SplitMix64& stream);

}  // namespace aldk
