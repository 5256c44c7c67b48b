#include "aldk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aldk/errors.hpp"

namespace aldk {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
    n *= e;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw ShapeError("shape " + to_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor(Shape{static_cast<std::int64_t>(values.size())}, std::vector<float>(values));
}

float Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::exact_scalar(double value) {
  Tensor t = scalar(static_cast<float>(value));
  t.precise_ = value;
  return t;
}

double Tensor::precise_item() const {
  const float v = item();
  // Raw writes through data() invalidate the remembered value.
  if (precise_ && static_cast<float>(*precise_) == v) return *precise_;
  return v;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  Tensor out(std::move(shape), data_);
  out.precise_ = precise_;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  return acc;
}

float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.raw(), b.raw(), static_cast<std::size_t>(a.numel()) * sizeof(float)) == 0;
}

}  // namespace aldk
