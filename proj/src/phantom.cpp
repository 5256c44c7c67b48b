#include "aldk/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "aldk/errors.hpp"

namespace aldk {

void validate(const PhantomSpec& s) {
  if (s.extent < 16 || (s.extent & (s.extent - 1))) throw ConfigError("phantom extent must be a power of two >= 16");
  if (s.blob_count < 0) throw ConfigError("blob count must be >= 0");
  if (s.blob_amplitude_min > s.blob_amplitude_max || s.blob_width_min <= 0.0 || s.blob_width_min > s.blob_width_max)
    throw ConfigError("invalid blob ranges");
  if (s.organ_axis_min <= 0.0 || s.organ_axis_min > s.organ_axis_max || s.organ_axis_max >= 0.5)
    throw ConfigError("organ semi-axes must lie in (0, 0.5) of the extent");
  if (s.organ_intensity_min > s.organ_intensity_max) throw ConfigError("invalid organ intensity range");
}

void validate(const FieldSpec& s) {
  if (s.control_extent < 2) throw ConfigError("control grid extent must be >= 2");
  if (s.amplitude < 0.0) throw ConfigError("field amplitude must be >= 0");
  if (s.max_derivative <= 0.0) throw ConfigError("derivative bound must be positive");
}

Phantom gen_phantom(const PhantomSpec& spec) {
  validate(spec);
  SplitMix64 rng(spec.seed);
  const std::int64_t n = spec.extent;
  const double e = static_cast<double>(n);

  struct Blob {
    double x, y, z, amp, inv2s2;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < spec.blob_count; ++i) {
    Blob b{};
    b.x = rng.uniform(0.15, 0.85) * e;
    b.y = rng.uniform(0.15, 0.85) * e;
    b.z = rng.uniform(0.15, 0.85) * e;
    b.amp = rng.uniform(spec.blob_amplitude_min, spec.blob_amplitude_max);
    const double sigma = rng.uniform(spec.blob_width_min, spec.blob_width_max);
    b.inv2s2 = 1.0 / (2.0 * sigma * sigma);
    blobs.push_back(b);
  }
  const double cx = (0.5 + rng.uniform(-0.1, 0.1)) * e, cy = (0.5 + rng.uniform(-0.1, 0.1)) * e,
               cz = (0.5 + rng.uniform(-0.1, 0.1)) * e;
  const double ax = rng.uniform(spec.organ_axis_min, spec.organ_axis_max) * e;
  const double ay = rng.uniform(spec.organ_axis_min, spec.organ_axis_max) * e;
  const double az = rng.uniform(spec.organ_axis_min, spec.organ_axis_max) * e;
  const double organ = rng.uniform(spec.organ_intensity_min, spec.organ_intensity_max);
  const double mean_axis = (ax + ay + az) / 3.0;

  std::vector<double> raw(static_cast<std::size_t>(n * n * n));
  Tensor mask(Shape{1, n, n, n}, 0.0f);
  for (std::int64_t z = 0, v = 0; z < n; ++z)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x, ++v) {
        double val = 0.0;
        for (const auto& b : blobs) {
          const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y) + (z - b.z) * (z - b.z);
          val += b.amp * std::exp(-d2 * b.inv2s2);
        }
        const double r = std::sqrt(((x - cx) / ax) * ((x - cx) / ax) + ((y - cy) / ay) * ((y - cy) / ay) +
                                   ((z - cz) / az) * ((z - cz) / az));
        // Soft edge about one voxel wide.
        val += organ / (1.0 + std::exp((r - 1.0) * mean_axis));
        raw[static_cast<std::size_t>(v)] = val;
        if (r <= 1.0) mask[v] = 1.0f;
      }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (!(*hi - *lo > 1e-6)) throw ConfigError("phantom spec yields a constant volume");
  if (mask.data().end() == std::find(mask.data().begin(), mask.data().end(), 1.0f))
    throw ConfigError("phantom spec yields an empty organ mask");
  Tensor image(Shape{1, n, n, n});
  for (std::size_t i = 0; i < raw.size(); ++i)
    image[static_cast<std::int64_t>(i)] = static_cast<float>((raw[i] - *lo) / (*hi - *lo));
  return {Volume(std::move(image)), MaskVolume(std::move(mask))};
}

double max_abs_derivative(const DisplacementField& field) {
  const Tensor& u = field.u();
  const std::int64_t d = u.dim(1), h = u.dim(2), w = u.dim(3), n = d * h * w;
  auto diff = [](auto&& sample, std::int64_t i, std::int64_t extent) -> double {
    if (extent < 2) return 0.0;
    if (i == 0) return sample(1) - sample(0);
    if (i == extent - 1) return sample(extent - 1) - sample(extent - 2);
    return 0.5 * (sample(i + 1) - sample(i - 1));
  };
  double m = 0.0;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t z = 0; z < d; ++z)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          auto at = [&](std::int64_t zz, std::int64_t yy, std::int64_t xx) {
            return static_cast<double>(u[c * n + (zz * h + yy) * w + xx]);
          };
          m = std::max(m, std::abs(diff([&](std::int64_t i) { return at(z, y, i); }, x, w)));
          m = std::max(m, std::abs(diff([&](std::int64_t i) { return at(z, i, x); }, y, h)));
          m = std::max(m, std::abs(diff([&](std::int64_t i) { return at(i, y, x); }, z, d)));
        }
  return m;
}

DisplacementField gen_smooth_field(const FieldSpec& spec, std::int64_t extent, SplitMix64& stream) {
  validate(spec);
  if (extent < 3) throw ConfigError("field extent must be >= 3");
  const int g = spec.control_extent;
  std::vector<double> control(static_cast<std::size_t>(3 * g * g * g));
  for (auto& c : control) c = stream.uniform(-spec.amplitude, spec.amplitude);

  // Corner-aligned trilinear upsampling of the control grid.
  auto tap = [&](std::int64_t i, std::int64_t& i0, std::int64_t& i1, double& f) {
    const double p = static_cast<double>(i) * (g - 1) / static_cast<double>(extent - 1);
    i0 = std::min(static_cast<std::int64_t>(std::floor(p)), static_cast<std::int64_t>(g - 1));
    i1 = std::min<std::int64_t>(i0 + 1, g - 1);
    f = p - static_cast<double>(i0);
  };
  const std::int64_t n = extent * extent * extent;
  std::vector<double> field(static_cast<std::size_t>(3 * n));
  for (std::int64_t z = 0, v = 0; z < extent; ++z)
    for (std::int64_t y = 0; y < extent; ++y)
      for (std::int64_t x = 0; x < extent; ++x, ++v) {
        std::int64_t z0, z1, y0, y1, x0, x1;
        double fz, fy, fx;
        tap(z, z0, z1, fz);
        tap(y, y0, y1, fy);
        tap(x, x0, x1, fx);
        for (int c = 0; c < 3; ++c) {
          auto at = [&](std::int64_t zz, std::int64_t yy, std::int64_t xx) {
            return control[static_cast<std::size_t>(((c * g + zz) * g + yy) * g + xx)];
          };
          const double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x1) * fx;
          const double c01 = at(z0, y1, x0) * (1 - fx) + at(z0, y1, x1) * fx;
          const double c10 = at(z1, y0, x0) * (1 - fx) + at(z1, y0, x1) * fx;
          const double c11 = at(z1, y1, x0) * (1 - fx) + at(z1, y1, x1) * fx;
          field[static_cast<std::size_t>(c * n + v)] =
              (c00 * (1 - fy) + c01 * fy) * (1 - fz) + (c10 * (1 - fy) + c11 * fy) * fz;
        }
      }

  Tensor u(Shape{3, extent, extent, extent});
  for (std::size_t i = 0; i < field.size(); ++i) u[static_cast<std::int64_t>(i)] = static_cast<float>(field[i]);
  const double deriv = max_abs_derivative(DisplacementField(u));
  if (deriv > spec.max_derivative) {
    const double s = spec.max_derivative / deriv;
    for (std::size_t i = 0; i < field.size(); ++i) u[static_cast<std::int64_t>(i)] = static_cast<float>(field[i] * s);
  }
  DisplacementField out(std::move(u));
  if (const auto folds = folding_count(out); folds != 0)
    throw InternalError("generated teacher field folds at " + std::to_string(folds) + " voxels");
  return out;
}

PairRecord make_pair(const PhantomSpec& spec, const FieldSpec& field_spec, SplitMix64& stream) {
  PhantomSpec ps = spec;
  ps.seed = stream.next();
  Phantom p = gen_phantom(ps);
  DisplacementField gt = gen_smooth_field(field_spec, spec.extent, stream);
  Volume fixed = warp(p.image, gt);
  MaskVolume fixed_mask = warp(p.mask, gt);
  return {std::move(p.image), std::move(fixed), std::move(p.mask), std::move(fixed_mask), std::move(gt)};
}

}  // namespace aldk
