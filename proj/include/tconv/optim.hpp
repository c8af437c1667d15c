#pragma once

#include <span>
#include <vector>

#include "tconv/tensor.hpp"

namespace tconv {

/// Classic momentum SGD: v <- mu v + g, p <- p - lr v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }

  /// Applies one update. A non-finite gradient skips the step entirely,
  /// logs a warning, and returns false.
  bool step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

}  // namespace tconv
