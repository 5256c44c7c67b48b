#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aldk {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float32 array, last axis fastest. A rank-0 tensor holds a
/// single scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }
  /// Rank-0 tensor that also remembers the unrounded double it came from.
  static Tensor exact_scalar(double value);
  static Tensor vector(std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Value of a single-element tensor.
  float item() const;
  /// item() in double, using the unrounded value when it is still current.
  double precise_item() const;

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
  std::optional<double> precise_;
};

/// Inner product accumulated in double.
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
float max_abs(const Tensor& t);
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Bitwise equality, distinguishing -0 from +0 and comparing NaN payloads.
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace aldk
