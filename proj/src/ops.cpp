#include "aldk/ops.hpp"

#include <cmath>

#include "aldk/conv_kernels.hpp"
#include "aldk/errors.hpp"

namespace aldk {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Rank-0 results are evaluated in double from the inputs' unrounded values,
// so scalar loss arithmetic keeps the precision of the reductions feeding it.
template <class F>
Tensor map(const Tensor& x, F f) {
  if (x.rank() == 0) return Tensor::exact_scalar(f(x.precise_item()));
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  if (a.rank() == 0) return Tensor::exact_scalar(f(a.precise_item(), b.precise_item()));
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

std::int64_t trailing(const Shape& s) {
  std::int64_t n = 1;
  for (std::size_t i = 1; i < s.size(); ++i) n *= s[i];
  return n;
}

Shape with_channels(Shape s, std::int64_t c) {
  s.at(0) = c;
  return s;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return record(zip(a.value(), b.value(), [](auto x, auto y) { return x + y; }), "add", {a, b},
                [](const BackwardArgs& ctx) { return std::vector<Var>{ctx.grad, ctx.grad}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return record(zip(a.value(), b.value(), [](auto x, auto y) { return x - y; }), "sub", {a, b},
                [](const BackwardArgs& ctx) { return std::vector<Var>{ctx.grad, neg(ctx.grad)}; });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return record(zip(a.value(), b.value(), [](auto x, auto y) { return x * y; }), "mul", {a, b},
                [](const BackwardArgs& ctx) {
                  std::vector<Var> g(2);
                  if (ctx.needs[0]) g[0] = mul(ctx.grad, ctx.inputs[1]);
                  if (ctx.needs[1]) g[1] = mul(ctx.grad, ctx.inputs[0]);
                  return g;
                });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return record(zip(a.value(), b.value(), [](auto x, auto y) { return x / y; }), "div", {a, b},
                [](const BackwardArgs& ctx) {
                  std::vector<Var> g(2);
                  if (ctx.needs[0]) g[0] = div(ctx.grad, ctx.inputs[1]);
                  if (ctx.needs[1]) g[1] = neg(div(mul(ctx.grad, ctx.output), ctx.inputs[1]));
                  return g;
                });
}

Var safe_div(const Var& a, const Var& b) {
  require_same_shape(a, b, "safe_div");
  return record(zip(a.value(), b.value(), [](auto x, auto y) { return y == 0 ? decltype(x)(0) : x / y; }), "safe_div",
                {a, b}, [](const BackwardArgs& ctx) {
                  std::vector<Var> g(2);
                  if (ctx.needs[0]) g[0] = safe_div(ctx.grad, ctx.inputs[1]);
                  if (ctx.needs[1]) g[1] = neg(safe_div(mul(ctx.grad, ctx.output), ctx.inputs[1]));
                  return g;
                });
}

Var affine(const Var& x, float s, float shift) {
  return record(map(x.value(), [=](auto v) { return decltype(v)(s) * v + decltype(v)(shift); }), "affine", {x},
                [s](const BackwardArgs& ctx) { return std::vector<Var>{scale(ctx.grad, s)}; });
}

Var sqrt(const Var& x) {
  return record(map(x.value(), [](auto v) { return std::sqrt(v); }), "sqrt", {x}, [](const BackwardArgs& ctx) {
    return std::vector<Var>{safe_div(ctx.grad, scale(ctx.output, 2.0f))};
  });
}

Var relu(const Var& x) {
  return record(map(x.value(), [](float v) { return v > 0.0f ? v : 0.0f; }), "relu", {x},
                [](const BackwardArgs& ctx) {
                  auto mask = Var::constant(map(ctx.inputs[0].value(), [](float v) { return v > 0.0f ? 1.0f : 0.0f; }));
                  return std::vector<Var>{mul(ctx.grad, mask)};
                });
}

Var sigmoid(const Var& x) {
  auto f = [](float v) {
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
  };
  return record(map(x.value(), f), "sigmoid", {x}, [](const BackwardArgs& ctx) {
    const Var& s = ctx.output;
    return std::vector<Var>{mul(ctx.grad, mul(s, affine(s, -1.0f, 1.0f)))};
  });
}

Var sum_all(const Var& x) {
  return record(Tensor::exact_scalar(sum(x.value())), "sum_all", {x},
                [shape = x.shape()](const BackwardArgs& ctx) { return std::vector<Var>{broadcast(ctx.grad, shape)}; });
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(x.numel());
  return record(Tensor::exact_scalar(sum(x.value()) / n), "mean_all", {x},
                [shape = x.shape(), n](const BackwardArgs& ctx) {
                  return std::vector<Var>{broadcast(scale(ctx.grad, static_cast<float>(1.0 / n)), shape)};
                });
}

Var broadcast(const Var& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("broadcast expects a scalar, got " + to_string(s.shape()));
  return record(Tensor(shape, s.item()), "broadcast", {s}, [ss = s.shape()](const BackwardArgs& ctx) {
    return std::vector<Var>{reshape(sum_all(ctx.grad), ss)};
  });
}

Var reshape(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return record(x.value().reshaped(shape), "reshape", {x},
                [from = x.shape()](const BackwardArgs& ctx) { return std::vector<Var>{reshape(ctx.grad, from)}; });
}

Var l2_norm(const Var& x) { return sqrt(sum_all(square(x))); }

Var concat_channels(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.empty() || sa.size() != sb.size() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1))
    throw ShapeError("concat_channels: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  Tensor out(with_channels(sa, sa[0] + sb[0]));
  std::copy(a.value().data().begin(), a.value().data().end(), out.data().begin());
  std::copy(b.value().data().begin(), b.value().data().end(), out.data().begin() + a.numel());
  return record(std::move(out), "concat_channels", {a, b}, [ca = sa[0], cb = sb[0]](const BackwardArgs& ctx) {
    std::vector<Var> g(2);
    if (ctx.needs[0]) g[0] = slice_channels(ctx.grad, 0, ca);
    if (ctx.needs[1]) g[1] = slice_channels(ctx.grad, ca, cb);
    return g;
  });
}

Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count) {
  const Shape& s = x.shape();
  if (s.empty() || begin < 0 || count <= 0 || begin + count > s[0])
    throw ShapeError("slice_channels: range out of bounds for " + to_string(s));
  const std::int64_t inner = trailing(s);
  Tensor out(with_channels(s, count));
  auto src = x.value().data().subspan(static_cast<std::size_t>(begin * inner), static_cast<std::size_t>(count * inner));
  std::copy(src.begin(), src.end(), out.data().begin());
  return record(std::move(out), "slice_channels", {x}, [begin, total = s[0]](const BackwardArgs& ctx) {
    return std::vector<Var>{embed_channels(ctx.grad, begin, total)};
  });
}

Var embed_channels(const Var& x, std::int64_t begin, std::int64_t total) {
  const Shape& s = x.shape();
  if (s.empty() || begin < 0 || begin + s[0] > total)
    throw ShapeError("embed_channels: range out of bounds for " + to_string(s));
  const std::int64_t inner = trailing(s);
  Tensor out(with_channels(s, total), 0.0f);
  std::copy(x.value().data().begin(), x.value().data().end(), out.data().begin() + begin * inner);
  return record(std::move(out), "embed_channels", {x}, [begin, count = s[0]](const BackwardArgs& ctx) {
    return std::vector<Var>{slice_channels(ctx.grad, begin, count)};
  });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const Shape& s = x.shape();
  if (s.empty() || bias.shape() != Shape{s[0]})
    throw ShapeError("add_channel_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(s));
  const std::int64_t inner = trailing(s);
  Tensor out = x.value();
  for (std::int64_t c = 0; c < s[0]; ++c) {
    const float b = bias.value()[c];
    for (std::int64_t i = 0; i < inner; ++i) out[c * inner + i] += b;
  }
  return record(std::move(out), "add_channel_bias", {x, bias}, [](const BackwardArgs& ctx) {
    std::vector<Var> g(2);
    if (ctx.needs[0]) g[0] = ctx.grad;
    if (ctx.needs[1]) g[1] = channel_sum(ctx.grad);
    return g;
  });
}

Var channel_sum(const Var& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("channel_sum on a scalar");
  const std::int64_t inner = trailing(s);
  Tensor out(Shape{s[0]});
  for (std::int64_t c = 0; c < s[0]; ++c) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < inner; ++i) acc += x.value()[c * inner + i];
    out[c] = static_cast<float>(acc);
  }
  return record(std::move(out), "channel_sum", {x},
                [s](const BackwardArgs& ctx) { return std::vector<Var>{broadcast_channels(ctx.grad, s)}; });
}

Var broadcast_channels(const Var& bias, const Shape& shape) {
  if (shape.empty() || bias.shape() != Shape{shape[0]})
    throw ShapeError("broadcast_channels: " + to_string(bias.shape()) + " vs " + to_string(shape));
  const std::int64_t inner = trailing(shape);
  Tensor out(shape);
  for (std::int64_t c = 0; c < shape[0]; ++c)
    for (std::int64_t i = 0; i < inner; ++i) out[c * inner + i] = bias.value()[c];
  return record(std::move(out), "broadcast_channels", {bias},
                [](const BackwardArgs& ctx) { return std::vector<Var>{channel_sum(ctx.grad)}; });
}

Var conv3d(const Var& input, const Var& kernel, int stride) {
  Tensor out = kernels::conv3d(input.value(), kernel.value(), stride);
  const int k = static_cast<int>(kernel.shape()[2]);
  return record(std::move(out), "conv3d", {input, kernel}, [stride, k](const BackwardArgs& ctx) {
    std::vector<Var> g(2);
    if (ctx.needs[0]) g[0] = tconv3d(ctx.grad, ctx.inputs[1], stride);
    if (ctx.needs[1]) g[1] = conv3d_kernel_grad(ctx.inputs[0], ctx.grad, k, stride);
    return g;
  });
}

Var conv3d(const Var& input, const Var& kernel, const Var& bias, int stride) {
  return add_channel_bias(conv3d(input, kernel, stride), bias);
}

Var tconv3d(const Var& input, const Var& kernel, int stride) {
  Tensor out = kernels::conv3d_transpose(input.value(), kernel.value(), stride);
  const int k = static_cast<int>(kernel.shape()[2]);
  return record(std::move(out), "tconv3d", {input, kernel}, [stride, k](const BackwardArgs& ctx) {
    std::vector<Var> g(2);
    if (ctx.needs[0]) g[0] = conv3d(ctx.grad, ctx.inputs[1], stride);
    if (ctx.needs[1]) g[1] = conv3d_kernel_grad(ctx.grad, ctx.inputs[0], k, stride);
    return g;
  });
}

Var tconv3d(const Var& input, const Var& kernel, const Var& bias, int stride) {
  return add_channel_bias(tconv3d(input, kernel, stride), bias);
}

Var conv3d_kernel_grad(const Var& input, const Var& grad_output, int kernel_size, int stride) {
  Tensor out = kernels::conv3d_kernel_grad(input.value(), grad_output.value(), kernel_size, stride);
  return record(std::move(out), "conv3d_kernel_grad", {input, grad_output}, [stride](const BackwardArgs& ctx) {
    std::vector<Var> g(2);
    if (ctx.needs[0]) g[0] = tconv3d(ctx.inputs[1], ctx.grad, stride);
    if (ctx.needs[1]) g[1] = conv3d(ctx.inputs[0], ctx.grad, stride);
    return g;
  });
}

}  // namespace aldk
