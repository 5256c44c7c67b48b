#pragma once

#include "aldk/deformation.hpp"

namespace aldk {

/// 2|A n B| / (|A| + |B|) over binary tensors of equal shape.
double dice(const Tensor& a, const Tensor& b);
/// |A n B| / |A u B|.
double jacc(const Tensor& a, const Tensor& b);

inline double dice(const MaskVolume& a, const MaskVolume& b) { return dice(a.grid(), b.grid()); }
inline double jacc(const MaskVolume& a, const MaskVolume& b) { return jacc(a.grid(), b.grid()); }

}  // namespace aldk
