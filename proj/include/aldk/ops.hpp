#pragma once

// Differentiable primitives. Unless noted otherwise each op's backward is
// built from ops in this header, so gradients through them can be
// differentiated again.

#include "aldk/autodiff.hpp"

namespace aldk {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// a / b with 0 wherever b == 0.
Var safe_div(const Var& a, const Var& b);
/// scale * x + shift.
Var affine(const Var& x, float scale, float shift = 0.0f);
inline Var scale(const Var& x, float s) { return affine(x, s, 0.0f); }
inline Var neg(const Var& x) { return affine(x, -1.0f, 0.0f); }
inline Var square(const Var& x) { return mul(x, x); }
/// Square root; its derivative at 0 is taken as 0.
Var sqrt(const Var& x);

/// relu'(0) = 0.
Var relu(const Var& x);
Var sigmoid(const Var& x);

Var sum_all(const Var& x);
Var mean_all(const Var& x);
/// Scalar expanded to `shape`.
Var broadcast(const Var& scalar, const Shape& shape);
/// Same data, new shape of equal element count.
Var reshape(const Var& x, const Shape& shape);
/// sqrt(sum(x^2)).
Var l2_norm(const Var& x);

/// Channel-axis (axis 0) concatenation of [C,...] tensors with equal trailing extents.
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count);
/// Places x at channels [begin, begin + C) of a zero tensor with `total` channels.
Var embed_channels(const Var& x, std::int64_t begin, std::int64_t total);

/// x[c,...] + b[c].
Var add_channel_bias(const Var& x, const Var& bias);
/// Sum over all but the channel axis: [C,...] -> [C].
Var channel_sum(const Var& x);
/// [C] -> shape with b[c] repeated along trailing axes.
Var broadcast_channels(const Var& bias, const Shape& shape);

/// Same-padded stride-s 3D cross-correlation; kernel [C_out,C_in,k,k,k].
Var conv3d(const Var& input, const Var& kernel, int stride);
Var conv3d(const Var& input, const Var& kernel, const Var& bias, int stride);
/// Adjoint of conv3d; kernel [C_in,C_out,k,k,k] in the transposed sense.
Var tconv3d(const Var& input, const Var& kernel, int stride);
Var tconv3d(const Var& input, const Var& kernel, const Var& bias, int stride);
/// Kernel gradient of conv3d as a recorded op.
Var conv3d_kernel_grad(const Var& input, const Var& grad_output, int kernel_size, int stride);

inline Var scalar(float v) { return Var::constant(Tensor::scalar(v)); }

}  // namespace aldk
