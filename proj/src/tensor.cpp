#include "cse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cse {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_numel(shape_)) {
    throw InputError("tensor data length " + std::to_string(values_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

std::size_t argmax(const Tensor& t) {
  if (t.empty()) throw InputError("argmax of empty tensor");
  auto v = t.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace cse
