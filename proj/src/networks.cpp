#include "aldk/networks.hpp"

#include <cmath>

#include "aldk/errors.hpp"
#include "aldk/ops.hpp"
#include "aldk/rng.hpp"

namespace aldk {
namespace {

Tensor glorot(SplitMix64& rng, Shape shape, std::int64_t fan_in, std::int64_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

void add_layer(ParameterCollection& params, SplitMix64& rng, const std::string& name, std::int64_t c_in,
               std::int64_t c_out, int k, bool transposed) {
  const std::int64_t k3 = static_cast<std::int64_t>(k) * k * k;
  Shape shape = transposed ? Shape{c_in, c_out, k, k, k} : Shape{c_out, c_in, k, k, k};
  params.add(name + ".weight", glorot(rng, std::move(shape), c_in * k3, c_out * k3));
  params.add(name + ".bias", Tensor(Shape{c_out}, 0.0f));
}

int channels_at(const StudentConfig& c, int level) { return c.base_channels << level; }

void expect_shape(const Var& v, const Shape& expected, const char* where) {
  if (v.shape() != expected)
    throw InternalError(std::string(where) + ": activation " + to_string(v.shape()) + ", expected " +
                        to_string(expected));
}

}  // namespace

void validate(const StudentConfig& c) {
  if (c.base_channels < 1 || c.levels < 1 || c.kernel < c.stride || c.stride < 1 || c.cascades < 1)
    throw ConfigError("invalid student configuration");
}

void validate(const DiscriminatorConfig& c) {
  if (c.channels.empty() || c.kernel < c.stride || c.stride < 1) throw ConfigError("invalid discriminator configuration");
  std::int64_t e = c.extent;
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    if (e < c.stride || e % c.stride)
      throw ConfigError("discriminator extent " + std::to_string(c.extent) + " too small for " +
                        std::to_string(c.channels.size()) + " stride-" + std::to_string(c.stride) + " layers");
    e /= c.stride;
  }
}

std::string cascade_prefix(int cascade) { return "cascade" + std::to_string(cascade) + "."; }

ParameterCollection init_student(const StudentConfig& config, std::uint64_t seed) {
  validate(config);
  SplitMix64 rng(seed);
  ParameterCollection params;
  const int k = config.kernel;
  for (int c = 0; c < config.cascades; ++c) {
    const std::string p = cascade_prefix(c);
    std::int64_t in = 2;
    for (int l = 0; l < config.levels; ++l) {
      add_layer(params, rng, p + "enc" + std::to_string(l), in, channels_at(config, l), k, false);
      in = channels_at(config, l);
    }
    // Decoder level l upsamples to the resolution of encoder level l-1.
    for (int l = config.levels - 1; l >= 1; --l) {
      const std::int64_t skip = l == config.levels - 1 ? 0 : channels_at(config, l);
      add_layer(params, rng, p + "dec" + std::to_string(l), channels_at(config, l) + skip, channels_at(config, l - 1),
                k, true);
    }
    const std::int64_t head_in = config.levels > 1 ? 2 * channels_at(config, 0) : channels_at(config, 0);
    add_layer(params, rng, p + "flow", head_in, 3, k, true);
  }
  return params;
}

ParameterCollection init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
  validate(config);
  SplitMix64 rng(seed);
  ParameterCollection params;
  std::int64_t in = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    add_layer(params, rng, "disc.conv" + std::to_string(i), in, config.channels[i], config.kernel, false);
    in = config.channels[i];
  }
  return params;
}

Var student_forward(const Var& moving, const Var& fixed, const ParameterCollection& params,
                    const StudentConfig& config, int cascade) {
  validate(config);
  if (moving.shape() != fixed.shape())
    throw ShapeError("moving " + to_string(moving.shape()) + " and fixed " + to_string(fixed.shape()) + " differ");
  const Shape& s = moving.shape();
  if (s.size() != 4 || s[0] != 1) throw ShapeError("student input must be [1,D,H,W], got " + to_string(s));
  std::int64_t factor = 1;
  for (int l = 0; l < config.levels; ++l) factor *= config.stride;
  for (int a = 1; a < 4; ++a)
    if (s[a] % factor)
      throw ShapeError("extent " + to_string(s) + " not divisible by " + std::to_string(factor));
  if (!params.contains(cascade_prefix(cascade) + "flow.weight"))
    throw ConfigError("no parameters for cascade " + std::to_string(cascade));

  const std::string p = cascade_prefix(cascade);
  auto w = [&](const std::string& layer) -> const Var& { return params.at(p + layer + ".weight").var; };
  auto b = [&](const std::string& layer) -> const Var& { return params.at(p + layer + ".bias").var; };
  auto ladder = [&](int level) {
    std::int64_t f = 1;
    for (int i = 0; i < level; ++i) f *= config.stride;
    return Shape{channels_at(config, level - 1), s[1] / f, s[2] / f, s[3] / f};
  };

  std::vector<Var> skips;
  Var x = concat_channels(moving, fixed);
  for (int l = 0; l < config.levels; ++l) {
    const std::string name = "enc" + std::to_string(l);
    x = relu(conv3d(x, w(name), b(name), config.stride));
    expect_shape(x, ladder(l + 1), "encoder");
    skips.push_back(x);
  }
  for (int l = config.levels - 1; l >= 1; --l) {
    const std::string name = "dec" + std::to_string(l);
    if (l != config.levels - 1) x = concat_channels(x, skips[static_cast<std::size_t>(l)]);
    x = relu(tconv3d(x, w(name), b(name), config.stride));
    expect_shape(x, ladder(l), "decoder");
  }
  if (config.levels > 1) x = concat_channels(x, skips.front());
  x = tconv3d(x, w("flow"), b("flow"), config.stride);
  expect_shape(x, Shape{3, s[1], s[2], s[3]}, "flow head");
  return x;
}

DisplacementField student_forward(const Volume& moving, const Volume& fixed, const ParameterCollection& params,
                                  const StudentConfig& config, int cascade) {
  auto frozen = params.detached();
  return DisplacementField(
      student_forward(Var::constant(moving.grid()), Var::constant(fixed.grid()), frozen, config, cascade).value());
}

CascadeOutput cascade_forward(const Var& moving, const Var& fixed, const ParameterCollection& params,
                              const StudentConfig& config) {
  validate(config);
  const int n = config.cascades;
  if (!params.contains(cascade_prefix(n - 1) + "flow.weight") || params.contains(cascade_prefix(n) + "flow.weight"))
    throw ConfigError("parameter collection does not hold exactly " + std::to_string(n) + " cascades");
  CascadeOutput out;
  for (int k = 0; k < n; ++k) {
    const Var current = k == 0 ? moving : warp(moving, out.total);
    Var flow = student_forward(current, fixed, params, config, k);
    out.total = k == 0 ? flow : compose(out.total, flow);
    out.flows.push_back(std::move(flow));
  }
  out.warped = warp(moving, out.total);
  return out;
}

Registration register_pair(const Volume& moving, const Volume& fixed, const ParameterCollection& params,
                           const StudentConfig& config) {
  auto frozen = params.detached();
  auto out = cascade_forward(Var::constant(moving.grid()), Var::constant(fixed.grid()), frozen, config);
  return {DisplacementField(out.total.value()), Volume(out.warped.value())};
}

Var critic_score(const Var& field, const ParameterCollection& theta, const DiscriminatorConfig& config) {
  const Shape expected{3, config.extent, config.extent, config.extent};
  if (field.shape() != expected)
    throw ShapeError("critic input " + to_string(field.shape()) + ", expected " + to_string(expected));
  Var x = field;
  const std::size_t layers = config.channels.size();
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = "disc.conv" + std::to_string(i);
    x = conv3d(x, theta.at(name + ".weight").var, theta.at(name + ".bias").var, config.stride);
    x = i + 1 < layers ? relu(x) : sigmoid(x);
  }
  return mean_all(x);
}

Var discriminator_forward(const Var& field, const ParameterCollection& theta, const DiscriminatorConfig& config) {
  validate(config);
  return critic_score(resample_field(field, config.extent), theta, config);
}

}  // namespace aldk
