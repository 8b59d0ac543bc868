#include "gmg/optim.hpp"

#include <cmath>

#include "gmg/errors.hpp"

namespace gmg {

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw ContractError("learning rate must be positive");
  for (const auto& p : params_) {
    if (!p.tensor->requires_grad()) throw ContractError("Adam parameter without gradient: " + p.name);
    m_.push_back(Tensor::zeros(p.tensor->shape()));
    v_.push_back(Tensor::zeros(p.tensor->shape()));
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].tensor;
    auto g = p.grad();
    auto w = p.mutable_values();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    p.check_finite(params_[i].name.c_str());
  }
  zero_grad();
}

void Adam::zero_grad() { zero_grads(params_); }

}  // namespace gmg
