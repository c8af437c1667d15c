#include "tconv/optim.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace tconv {

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sgd: learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
}

bool SgdMomentum::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape()) throw std::invalid_argument("sgd: gradient shape mismatch");
  for (const Tensor& g : grads)
    for (double v : g.values())
      if (!std::isfinite(v)) {
        std::clog << "warning: sgd step skipped, non-finite gradient\n";
        return false;
      }

  if (velocity_.empty())
    for (const Tensor* p : params) velocity_.emplace_back(p->shape());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto v = velocity_[i].values();
    auto g = grads[i].values();
    auto p = params[i]->values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      p[j] -= lr_ * v[j];
    }
  }
  return true;
}

}  // namespace tconv
