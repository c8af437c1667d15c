#include "tconv/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace tconv {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_))
    throw std::invalid_argument("tensor: " + std::to_string(values_.size()) + " values for shape " + to_string(shape_));
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != values_.size())
    throw std::invalid_argument("tensor: cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), values_);
}

}  // namespace tconv
