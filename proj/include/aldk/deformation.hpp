#pragma once

// Displacement-field semantics. A field u is a [3,D,H,W] tensor of voxel
// displacements ordered (u_x, u_y, u_z), where x is the fastest (W) axis.
// Warping samples the image at x + u(x); coordinates outside the grid clamp
// to the nearest edge.

#include <cstdint>

#include "aldk/autodiff.hpp"

namespace aldk {

/// Intensity volume [1,D,H,W] with power-of-two extents >= 16.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Tensor grid);
  const Tensor& grid() const noexcept { return grid_; }
  Shape spatial() const { return {grid_.dim(1), grid_.dim(2), grid_.dim(3)}; }

 private:
  Tensor grid_;
};

/// Binary segmentation [1,D,H,W] with values in {0,1}.
class MaskVolume {
 public:
  MaskVolume() = default;
  explicit MaskVolume(Tensor grid);
  const Tensor& grid() const noexcept { return grid_; }
  Shape spatial() const { return {grid_.dim(1), grid_.dim(2), grid_.dim(3)}; }
  std::int64_t count() const;

 private:
  Tensor grid_;
};

class DisplacementField {
 public:
  DisplacementField() = default;
  explicit DisplacementField(Tensor u);
  static DisplacementField zeros(const Shape& spatial);
  const Tensor& u() const noexcept { return u_; }
  Shape spatial() const { return {u_.dim(1), u_.dim(2), u_.dim(3)}; }

 private:
  Tensor u_;
};

/// True when every extent is a power of two and at least 16.
bool valid_registration_extents(const Shape& spatial);

enum class Interp { Trilinear, Nearest };

/// Trilinear warp of a [C,D,H,W] image by a [3,D,H,W] field, differentiable in
/// both arguments (first order only).
Var warp(const Var& image, const Var& field);
/// Nearest-neighbour warp; rejects inputs that require gradients.
Var warp(const Var& image, const Var& field, Interp interp);

Volume warp(const Volume& image, const DisplacementField& field);
MaskVolume warp(const MaskVolume& mask, const DisplacementField& field);
Tensor warp(const Tensor& image, const Tensor& field, Interp interp);

/// Field equivalent to warping by `first` and then by `second`:
/// u(x) = u_second(x) + u_first(x + u_second(x)).
Var compose(const Var& first, const Var& second);
DisplacementField compose(const DisplacementField& first, const DisplacementField& second);

/// det(I + grad u) per voxel; central differences inside, one-sided on faces.
Tensor jacobian_det_map(const DisplacementField& field);
/// Interior voxels whose Jacobian determinant is <= 0.
std::int64_t folding_count(const DisplacementField& field);

/// Trilinear (corner-aligned) resampling of a field to extent^3, with
/// displacements rescaled to the new voxel size. Identity when extents match.
Var resample_field(const Var& field, std::int64_t extent);

}  // namespace aldk
