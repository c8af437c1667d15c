#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tconv {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Gradients live in separate tensors of
/// the same shape (see Gradients in model.hpp), which lets several workers
/// share one set of parameter values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Channel-major access for C x H x W tensors.
  double& at(std::size_t c, std::size_t h, std::size_t w) { return values_[(c * shape_[1] + h) * shape_[2] + w]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return values_[(c * shape_[1] + h) * shape_[2] + w];
  }

  void fill(double v);
  /// Same values under a new shape with an equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace tconv
