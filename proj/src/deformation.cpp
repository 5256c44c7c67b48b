#include "aldk/deformation.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "aldk/errors.hpp"
#include "aldk/ops.hpp"

namespace aldk {
namespace {

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void check_grid(const Tensor& t, std::int64_t channels, const char* what) {
  if (t.rank() != 4 || t.dim(0) != channels)
    throw ShapeError(std::string(what) + " must be [" + std::to_string(channels) + ",D,H,W], got " +
                     to_string(t.shape()));
  if (!t.all_finite()) throw ShapeError(std::string(what) + " contains non-finite values");
}

struct Grid {
  std::int64_t d, h, w;
  std::int64_t voxels() const { return d * h * w; }
};

Grid spatial_of(const Tensor& t) { return {t.dim(1), t.dim(2), t.dim(3)}; }

void check_field_matches(const Tensor& image, const Tensor& field) {
  if (field.rank() != 4 || field.dim(0) != 3)
    throw ShapeError("displacement field must be [3,D,H,W], got " + to_string(field.shape()));
  if (image.rank() != 4 || image.dim(1) != field.dim(1) || image.dim(2) != field.dim(2) ||
      image.dim(3) != field.dim(3))
    throw ShapeError("extent mismatch: image " + to_string(image.shape()) + " vs field " + to_string(field.shape()));
}

// One clamped axis of a trilinear sample.
struct Axis {
  std::int64_t i0, i1;
  float f;          // weight of i1
  bool inside;      // coordinate was not clamped (derivative is live)
};

inline Axis axis_sample(float p, std::int64_t n) {
  // A non-finite coordinate poisons the sample instead of indexing out of range.
  if (std::isnan(p)) return {0, 0, p, false};
  const float hi = static_cast<float>(n - 1);
  const bool inside = p >= 0.0f && p <= hi;
  p = std::clamp(p, 0.0f, hi);
  const auto i0 = std::min(static_cast<std::int64_t>(std::floor(p)), n - 1);
  const auto i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, p - static_cast<float>(i0), inside && i1 != i0};
}

Tensor warp_trilinear(const Tensor& image, const Tensor& field) {
  const Grid g = spatial_of(image);
  const std::int64_t channels = image.dim(0), n = g.voxels();
  Tensor out(image.shape());
  const float* u = field.raw();
  for (std::int64_t z = 0, v = 0; z < g.d; ++z)
    for (std::int64_t y = 0; y < g.h; ++y)
      for (std::int64_t x = 0; x < g.w; ++x, ++v) {
        const Axis ax = axis_sample(static_cast<float>(x) + u[v], g.w);
        const Axis ay = axis_sample(static_cast<float>(y) + u[n + v], g.h);
        const Axis az = axis_sample(static_cast<float>(z) + u[2 * n + v], g.d);
        for (std::int64_t c = 0; c < channels; ++c) {
          const float* img = image.raw() + c * n;
          auto at = [&](std::int64_t zz, std::int64_t yy, std::int64_t xx) { return img[(zz * g.h + yy) * g.w + xx]; };
          const float c00 = at(az.i0, ay.i0, ax.i0) * (1 - ax.f) + at(az.i0, ay.i0, ax.i1) * ax.f;
          const float c01 = at(az.i0, ay.i1, ax.i0) * (1 - ax.f) + at(az.i0, ay.i1, ax.i1) * ax.f;
          const float c10 = at(az.i1, ay.i0, ax.i0) * (1 - ax.f) + at(az.i1, ay.i0, ax.i1) * ax.f;
          const float c11 = at(az.i1, ay.i1, ax.i0) * (1 - ax.f) + at(az.i1, ay.i1, ax.i1) * ax.f;
          const float c0 = c00 * (1 - ay.f) + c01 * ay.f;
          const float c1 = c10 * (1 - ay.f) + c11 * ay.f;
          out[c * n + v] = c0 * (1 - az.f) + c1 * az.f;
        }
      }
  return out;
}

// Returns {d image, d field} for upstream gradient `go`.
std::pair<Tensor, Tensor> warp_trilinear_backward(const Tensor& image, const Tensor& field, const Tensor& go,
                                                  bool want_image, bool want_field) {
  const Grid g = spatial_of(image);
  const std::int64_t channels = image.dim(0), n = g.voxels();
  std::vector<double> gi(want_image ? static_cast<std::size_t>(image.numel()) : 0, 0.0);
  Tensor gf(field.shape(), 0.0f);
  const float* u = field.raw();
  for (std::int64_t z = 0, v = 0; z < g.d; ++z)
    for (std::int64_t y = 0; y < g.h; ++y)
      for (std::int64_t x = 0; x < g.w; ++x, ++v) {
        const Axis ax = axis_sample(static_cast<float>(x) + u[v], g.w);
        const Axis ay = axis_sample(static_cast<float>(y) + u[n + v], g.h);
        const Axis az = axis_sample(static_cast<float>(z) + u[2 * n + v], g.d);
        const std::int64_t zs[2] = {az.i0, az.i1}, ys[2] = {ay.i0, ay.i1}, xs[2] = {ax.i0, ax.i1};
        const float wz[2] = {1 - az.f, az.f}, wy[2] = {1 - ay.f, ay.f}, wx[2] = {1 - ax.f, ax.f};
        double dx = 0.0, dy = 0.0, dz = 0.0;
        for (std::int64_t c = 0; c < channels; ++c) {
          const float gout = go[c * n + v];
          if (gout == 0.0f) continue;
          const float* img = image.raw() + c * n;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) {
                const std::int64_t idx = (zs[a] * g.h + ys[b]) * g.w + xs[e];
                if (want_image) gi[static_cast<std::size_t>(c * n + idx)] += static_cast<double>(gout) * wz[a] * wy[b] * wx[e];
                if (want_field) {
                  const double val = static_cast<double>(gout) * img[idx];
                  const double sz = a ? 1.0 : -1.0, sy = b ? 1.0 : -1.0, sx = e ? 1.0 : -1.0;
                  dx += val * wz[a] * wy[b] * sx;
                  dy += val * wz[a] * sy * wx[e];
                  dz += val * sz * wy[b] * wx[e];
                }
              }
        }
        if (want_field) {
          gf[v] = ax.inside ? static_cast<float>(dx) : 0.0f;
          gf[n + v] = ay.inside ? static_cast<float>(dy) : 0.0f;
          gf[2 * n + v] = az.inside ? static_cast<float>(dz) : 0.0f;
        }
      }
  Tensor gimg(image.shape(), 0.0f);
  for (std::size_t i = 0; i < gi.size(); ++i) gimg[static_cast<std::int64_t>(i)] = static_cast<float>(gi[i]);
  return {std::move(gimg), std::move(gf)};
}

Tensor warp_nearest(const Tensor& image, const Tensor& field) {
  const Grid g = spatial_of(image);
  const std::int64_t channels = image.dim(0), n = g.voxels();
  Tensor out(image.shape());
  const float* u = field.raw();
  auto nearest = [](float p, std::int64_t extent) -> std::int64_t {
    if (std::isnan(p)) return 0;
    const float c = std::clamp(p, 0.0f, static_cast<float>(extent - 1));
    return std::min(static_cast<std::int64_t>(std::floor(c + 0.5f)), extent - 1);
  };
  for (std::int64_t z = 0, v = 0; z < g.d; ++z)
    for (std::int64_t y = 0; y < g.h; ++y)
      for (std::int64_t x = 0; x < g.w; ++x, ++v) {
        const auto ix = nearest(static_cast<float>(x) + u[v], g.w);
        const auto iy = nearest(static_cast<float>(y) + u[n + v], g.h);
        const auto iz = nearest(static_cast<float>(z) + u[2 * n + v], g.d);
        for (std::int64_t c = 0; c < channels; ++c) out[c * n + v] = image[c * n + (iz * g.h + iy) * g.w + ix];
      }
  return out;
}

// Corner-aligned linear interpolation weights from n source samples to m.
struct Taps {
  std::vector<std::int64_t> i0, i1;
  std::vector<float> f;
};

Taps taps(std::int64_t from, std::int64_t to) {
  Taps t;
  for (std::int64_t j = 0; j < to; ++j) {
    const double p = to == 1 ? 0.0 : static_cast<double>(j) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
    auto i0 = std::min(static_cast<std::int64_t>(std::floor(p)), from - 1);
    auto i1 = std::min(i0 + 1, from - 1);
    t.i0.push_back(i0);
    t.i1.push_back(i1);
    t.f.push_back(static_cast<float>(p - static_cast<double>(i0)));
  }
  return t;
}

// Linear map from a field on grid `src` to grid `dst` (or its adjoint).
Tensor resample_linear(const Tensor& in, const Grid& src, const Grid& dst, bool adjoint) {
  const Taps tz = taps(src.d, dst.d), ty = taps(src.h, dst.h), tx = taps(src.w, dst.w);
  const double scale[3] = {
      src.w > 1 ? static_cast<double>(dst.w - 1) / static_cast<double>(src.w - 1) : 1.0,
      src.h > 1 ? static_cast<double>(dst.h - 1) / static_cast<double>(src.h - 1) : 1.0,
      src.d > 1 ? static_cast<double>(dst.d - 1) / static_cast<double>(src.d - 1) : 1.0};
  const std::int64_t ns = src.voxels(), nd = dst.voxels();
  std::vector<double> acc(static_cast<std::size_t>(3 * (adjoint ? ns : nd)), 0.0);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t z = 0, v = 0; z < dst.d; ++z)
      for (std::int64_t y = 0; y < dst.h; ++y)
        for (std::int64_t x = 0; x < dst.w; ++x, ++v) {
          const std::int64_t zs[2] = {tz.i0[z], tz.i1[z]}, ys[2] = {ty.i0[y], ty.i1[y]}, xs[2] = {tx.i0[x], tx.i1[x]};
          const double wz[2] = {1 - tz.f[z], tz.f[z]}, wy[2] = {1 - ty.f[y], ty.f[y]}, wx[2] = {1 - tx.f[x], tx.f[x]};
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) {
                const double w = scale[c] * wz[a] * wy[b] * wx[e];
                const std::int64_t s = c * ns + (zs[a] * src.h + ys[b]) * src.w + xs[e];
                if (adjoint)
                  acc[static_cast<std::size_t>(s)] += w * in[c * nd + v];
                else
                  acc[static_cast<std::size_t>(c * nd + v)] += w * in[s];
              }
        }
  const Grid& g = adjoint ? src : dst;
  Tensor out(Shape{3, g.d, g.h, g.w});
  for (std::size_t i = 0; i < acc.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<float>(acc[i]);
  return out;
}

Var resample_op(const Var& x, const Grid& src, const Grid& dst, bool adjoint) {
  Tensor out = resample_linear(x.value(), src, dst, adjoint);
  return record(std::move(out), adjoint ? "resample_adjoint" : "resample", {x},
                [src, dst, adjoint](const BackwardArgs& ctx) {
                  return std::vector<Var>{resample_op(ctx.grad, src, dst, !adjoint)};
                });
}

}  // namespace

bool valid_registration_extents(const Shape& spatial) {
  return spatial.size() == 3 &&
         std::all_of(spatial.begin(), spatial.end(), [](std::int64_t e) { return e >= 16 && is_pow2(e); });
}

Volume::Volume(Tensor grid) : grid_(std::move(grid)) {
  check_grid(grid_, 1, "volume");
  if (!valid_registration_extents(spatial()))
    throw ShapeError("volume extents must be powers of two >= 16, got " + to_string(grid_.shape()));
}

MaskVolume::MaskVolume(Tensor grid) : grid_(std::move(grid)) {
  check_grid(grid_, 1, "mask");
  if (!valid_registration_extents(spatial()))
    throw ShapeError("mask extents must be powers of two >= 16, got " + to_string(grid_.shape()));
  for (float v : grid_.data())
    if (v != 0.0f && v != 1.0f) throw ShapeError("mask is not binary");
}

std::int64_t MaskVolume::count() const {
  return std::count(grid_.data().begin(), grid_.data().end(), 1.0f);
}

DisplacementField::DisplacementField(Tensor u) : u_(std::move(u)) { check_grid(u_, 3, "displacement field"); }

DisplacementField DisplacementField::zeros(const Shape& spatial) {
  return DisplacementField(Tensor(Shape{3, spatial.at(0), spatial.at(1), spatial.at(2)}, 0.0f));
}

Var warp(const Var& image, const Var& field) {
  check_field_matches(image.value(), field.value());
  Tensor out = warp_trilinear(image.value(), field.value());
  return record(
      std::move(out), "warp", {image, field},
      [](const BackwardArgs& ctx) {
        auto [gi, gf] = warp_trilinear_backward(ctx.inputs[0].value(), ctx.inputs[1].value(), ctx.grad.value(),
                                                ctx.needs[0], ctx.needs[1]);
        std::vector<Var> g(2);
        if (ctx.needs[0]) g[0] = Var::constant(std::move(gi));
        if (ctx.needs[1]) g[1] = Var::constant(std::move(gf));
        return g;
      },
      /*differentiable_backward=*/false);
}

Var warp(const Var& image, const Var& field, Interp interp) {
  if (interp == Interp::Trilinear) return warp(image, field);
  if (image.requires_grad() || field.requires_grad())
    throw ConfigError("nearest-neighbour warp is not differentiable; detach its inputs");
  return Var::constant(warp(image.value(), field.value(), Interp::Nearest));
}

Tensor warp(const Tensor& image, const Tensor& field, Interp interp) {
  check_field_matches(image, field);
  return interp == Interp::Trilinear ? warp_trilinear(image, field) : warp_nearest(image, field);
}

Volume warp(const Volume& image, const DisplacementField& field) {
  return Volume(warp(image.grid(), field.u(), Interp::Trilinear));
}

MaskVolume warp(const MaskVolume& mask, const DisplacementField& field) {
  return MaskVolume(warp(mask.grid(), field.u(), Interp::Nearest));
}

Var compose(const Var& first, const Var& second) {
  if (first.shape() != second.shape())
    throw ShapeError("compose: extent mismatch " + to_string(first.shape()) + " vs " + to_string(second.shape()));
  return add(second, warp(first, second));
}

DisplacementField compose(const DisplacementField& first, const DisplacementField& second) {
  return DisplacementField(compose(Var::constant(first.u()), Var::constant(second.u())).value());
}

namespace {

std::vector<double> determinants(const DisplacementField& field) {
  const Tensor& u = field.u();
  const Grid g = spatial_of(u);
  if (g.d < 3 || g.h < 3 || g.w < 3) throw ShapeError("jacobian needs extents >= 3, got " + to_string(u.shape()));
  const std::int64_t n = g.voxels();
  auto at = [&](std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
    return static_cast<double>(u[c * n + (z * g.h + y) * g.w + x]);
  };
  // Central difference inside, one-sided on the faces.
  auto diff = [](auto&& sample, std::int64_t i, std::int64_t extent) {
    if (i == 0) return sample(1) - sample(0);
    if (i == extent - 1) return sample(extent - 1) - sample(extent - 2);
    return 0.5 * (sample(i + 1) - sample(i - 1));
  };
  std::vector<double> det(static_cast<std::size_t>(n));
  for (std::int64_t z = 0, v = 0; z < g.d; ++z)
    for (std::int64_t y = 0; y < g.h; ++y)
      for (std::int64_t x = 0; x < g.w; ++x, ++v) {
        Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
        for (int c = 0; c < 3; ++c) {
          jac(c, 0) += diff([&](std::int64_t i) { return at(c, z, y, i); }, x, g.w);
          jac(c, 1) += diff([&](std::int64_t i) { return at(c, z, i, x); }, y, g.h);
          jac(c, 2) += diff([&](std::int64_t i) { return at(c, i, y, x); }, z, g.d);
        }
        det[static_cast<std::size_t>(v)] = jac.determinant();
      }
  return det;
}

}  // namespace

Tensor jacobian_det_map(const DisplacementField& field) {
  const auto det = determinants(field);
  const Grid g = spatial_of(field.u());
  Tensor out(Shape{1, g.d, g.h, g.w});
  for (std::size_t i = 0; i < det.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<float>(det[i]);
  return out;
}

// Interior voxels only: face determinants come from one-sided differences.
std::int64_t folding_count(const DisplacementField& field) {
  const auto det = determinants(field);
  const Grid g = spatial_of(field.u());
  std::int64_t count = 0;
  for (std::int64_t z = 1; z + 1 < g.d; ++z)
    for (std::int64_t y = 1; y + 1 < g.h; ++y)
      for (std::int64_t x = 1; x + 1 < g.w; ++x)
        count += det[static_cast<std::size_t>((z * g.h + y) * g.w + x)] <= 0.0;
  return count;
}

Var resample_field(const Var& field, std::int64_t extent) {
  const Tensor& u = field.value();
  if (u.rank() != 4 || u.dim(0) != 3) throw ShapeError("resample_field expects [3,D,H,W], got " + to_string(u.shape()));
  if (extent < 2) throw ShapeError("resample_field: target extent must be >= 2");
  const Grid src = spatial_of(u);
  if (src.d == extent && src.h == extent && src.w == extent) return field;
  return resample_op(field, src, Grid{extent, extent, extent}, false);
}

}  // namespace aldk
