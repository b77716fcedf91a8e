#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cse {

/// Raised when an input violates a documented precondition (shape, range, format).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float tensor. Rank-3 tensors are laid out as (channels, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }

  void fill(float v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

std::size_t argmax(const Tensor& t);

}  // namespace cse
