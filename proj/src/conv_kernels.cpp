#include "aldk/conv_kernels.hpp"

#include <Eigen/Core>

#include "aldk/errors.hpp"

namespace aldk::kernels {
namespace {

using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Extents {
  int c, d, h, w;
  Eigen::Index voxels() const { return static_cast<Eigen::Index>(d) * h * w; }
};

Extents extents_of(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + " must be [C,D,H,W], got " + to_string(t.shape()));
  return {static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)),
          static_cast<int>(t.dim(3))};
}

void check_geometry(int k, int s) {
  if (s < 1 || k < s) throw ShapeError("kernel size must be >= stride >= 1");
}

// Rows are (c, kz, ky, kx), columns are output voxels.
RowMatD im2col(const Tensor& x, const Extents& in, const Extents& out, int k, int s) {
  const int pad = ConvGeometry{k, s}.pad_lo();
  RowMatD cols(static_cast<Eigen::Index>(in.c) * k * k * k, out.voxels());
  const float* src = x.raw();
  Eigen::Index row = 0;
  for (int c = 0; c < in.c; ++c)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          double* dst = cols.row(row).data();
          for (int oz = 0; oz < out.d; ++oz) {
            const int iz = oz * s - pad + kz;
            for (int oy = 0; oy < out.h; ++oy) {
              const int iy = oy * s - pad + ky;
              const bool inside = iz >= 0 && iz < in.d && iy >= 0 && iy < in.h;
              const float* line = inside ? src + ((static_cast<std::int64_t>(c) * in.d + iz) * in.h + iy) * in.w
                                         : nullptr;
              for (int ox = 0; ox < out.w; ++ox) {
                const int ix = ox * s - pad + kx;
                *dst++ = (inside && ix >= 0 && ix < in.w) ? static_cast<double>(line[ix]) : 0.0;
              }
            }
          }
        }
  return cols;
}

Tensor col2im(const RowMatD& cols, const Extents& img, const Extents& grid, int k, int s) {
  const int pad = ConvGeometry{k, s}.pad_lo();
  std::vector<double> acc(static_cast<std::size_t>(img.c) * img.voxels(), 0.0);
  Eigen::Index row = 0;
  for (int c = 0; c < img.c; ++c)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          const double* src = cols.row(row).data();
          for (int oz = 0; oz < grid.d; ++oz) {
            const int iz = oz * s - pad + kz;
            for (int oy = 0; oy < grid.h; ++oy, src += grid.w) {
              const int iy = oy * s - pad + ky;
              if (iz < 0 || iz >= img.d || iy < 0 || iy >= img.h) continue;
              double* line = acc.data() + ((static_cast<std::int64_t>(c) * img.d + iz) * img.h + iy) * img.w;
              for (int ox = 0; ox < grid.w; ++ox) {
                const int ix = ox * s - pad + kx;
                if (ix >= 0 && ix < img.w) line[ix] += src[ox];
              }
            }
          }
        }
  Tensor out(Shape{img.c, img.d, img.h, img.w});
  for (std::size_t i = 0; i < acc.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<float>(acc[i]);
  return out;
}

Eigen::Map<const RowMatF> as_matrix(const Tensor& t, Eigen::Index rows) {
  return Eigen::Map<const RowMatF>(t.raw(), rows, t.numel() / rows);
}

Tensor from_matrix(const RowMatD& m, Shape shape) {
  Tensor out(std::move(shape));
  Eigen::Map<RowMatF>(out.raw(), m.rows(), m.cols()) = m.cast<float>();
  return out;
}

int kernel_size_of(const Tensor& kernel) {
  if (kernel.rank() != 5 || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) != kernel.dim(4))
    throw ShapeError("kernel must be [C_out,C_in,k,k,k], got " + to_string(kernel.shape()));
  return static_cast<int>(kernel.dim(2));
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, int stride) {
  const Extents in = extents_of(input, "conv3d input");
  const int k = kernel_size_of(kernel);
  check_geometry(k, stride);
  if (kernel.dim(1) != in.c)
    throw ShapeError("conv3d: input has " + std::to_string(in.c) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  if (in.d % stride || in.h % stride || in.w % stride)
    throw ShapeError("conv3d: extents " + to_string(input.shape()) + " not divisible by stride " +
                     std::to_string(stride));
  const int c_out = static_cast<int>(kernel.dim(0));
  const Extents out{c_out, in.d / stride, in.h / stride, in.w / stride};
  const RowMatD cols = im2col(input, in, out, k, stride);
  const RowMatD y = as_matrix(kernel, c_out).cast<double>() * cols;
  return from_matrix(y, Shape{out.c, out.d, out.h, out.w});
}

Tensor conv3d_transpose(const Tensor& input, const Tensor& kernel, int stride) {
  const Extents in = extents_of(input, "conv3d_transpose input");
  const int k = kernel_size_of(kernel);
  check_geometry(k, stride);
  if (kernel.dim(0) != in.c)
    throw ShapeError("conv3d_transpose: input has " + std::to_string(in.c) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(0)));
  const Extents out{static_cast<int>(kernel.dim(1)), in.d * stride, in.h * stride, in.w * stride};
  const RowMatD cols = as_matrix(kernel, in.c).cast<double>().transpose() * as_matrix(input, in.c).cast<double>();
  return col2im(cols, out, in, k, stride);
}

Tensor conv3d_kernel_grad(const Tensor& input, const Tensor& grad_output, int kernel_size, int stride) {
  const Extents in = extents_of(input, "conv3d_kernel_grad input");
  const Extents go = extents_of(grad_output, "conv3d_kernel_grad grad");
  check_geometry(kernel_size, stride);
  if (go.d * stride != in.d || go.h * stride != in.h || go.w * stride != in.w)
    throw ShapeError("conv3d_kernel_grad: grad " + to_string(grad_output.shape()) + " incompatible with input " +
                     to_string(input.shape()));
  const RowMatD cols = im2col(input, in, go, kernel_size, stride);
  const RowMatD dk = as_matrix(grad_output, go.c).cast<double>() * cols.transpose();
  return from_matrix(dk, Shape{go.c, in.c, kernel_size, kernel_size, kernel_size});
}

}  // namespace aldk::kernels
