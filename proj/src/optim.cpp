#include "incdet/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace incdet {

Optimizer::Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {
  for (const auto& p : params_) {
    INCDET_CHECK(p.defined(), "optimizer given undefined parameter");
    INCDET_CHECK(p.requires_grad(), "optimizer given parameter without requires_grad");
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::require_grads() const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!params_[i].has_grad())
      throw std::runtime_error("optimizer step: parameter " + std::to_string(i) +
                               " " + shape_str(params_[i].shape()) +
                               " has no gradient (graph not wired to loss?)");
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, Scalar lr, Scalar momentum)
    : Optimizer(std::move(params)), lr_(lr), momentum_(momentum) {
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
}

void SgdMomentum::step() {
  require_grads();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Scalar* g = p.grad();
    auto& vel = velocity_[i];
    Scalar* d = p.data();
    for (std::int64_t j = 0, n = p.numel(); j < n; ++j) {
      vel[static_cast<std::size_t>(j)] = momentum_ * vel[static_cast<std::size_t>(j)] + g[j];
      d[j] -= lr_ * vel[static_cast<std::size_t>(j)];
    }
    p.zero_grad();
  }
}

Adam::Adam(std::vector<Tensor> params, Scalar lr, Scalar beta1, Scalar beta2,
           Scalar eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
    v_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
  }
}

void Adam::step() {
  require_grads();
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Scalar* g = p.grad();
    Scalar* d = p.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::int64_t j = 0, n = p.numel(); j < n; ++j) {
      const auto k = static_cast<std::size_t>(j);
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[j];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[j] * g[j];
      const Scalar mhat = m[k] / bc1;
      const Scalar vhat = v[k] / bc2;
      d[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    p.zero_grad();
  }
}

}  // namespace incdet
