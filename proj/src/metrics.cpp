#include "aldk/metrics.hpp"

#include "aldk/errors.hpp"

namespace aldk {
namespace {

struct Overlap {
  std::int64_t a = 0, b = 0, both = 0;
};

Overlap overlap(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mask extents differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Overlap o;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const bool in_a = a[i] != 0.0f, in_b = b[i] != 0.0f;
    o.a += in_a;
    o.b += in_b;
    o.both += in_a && in_b;
  }
  if (o.a + o.b == 0) throw ConfigError("overlap undefined: both masks are empty");
  return o;
}

}  // namespace

double dice(const Tensor& a, const Tensor& b) {
  const Overlap o = overlap(a, b);
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double jacc(const Tensor& a, const Tensor& b) {
  const Overlap o = overlap(a, b);
  return static_cast<double>(o.both) / static_cast<double>(o.a + o.b - o.both);
}

}  // namespace aldk
