#pragma once

// Raw 3D convolution kernels on [C,D,H,W] tensors. Padding is chosen so a
// stride-s convolution maps extent n to n/s and its transpose maps n back to
// n*s: pad_lo = (k - s) / 2, pad_hi = k - s - pad_lo.

#include "aldk/tensor.hpp"

namespace aldk::kernels {

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad_lo() const { return (kernel - stride) / 2; }
};

/// Cross-correlation. kernel: [C_out, C_in, k, k, k].
Tensor conv3d(const Tensor& input, const Tensor& kernel, int stride);

/// Adjoint of conv3d in its input. input: [C_out, d, h, w] -> [C_in, d*s, h*s, w*s].
Tensor conv3d_transpose(const Tensor& input, const Tensor& kernel, int stride);

/// d<conv3d(x, K), gy>/dK. Returns a tensor shaped like K.
Tensor conv3d_kernel_grad(const Tensor& input, const Tensor& grad_output, int kernel_size, int stride);

}  // namespace aldk::kernels
