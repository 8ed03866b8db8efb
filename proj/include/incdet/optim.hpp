#pragma once

#include <cstdint>
#include <vector>

#include "incdet/tensor.hpp"

namespace incdet {

/// Gradient-descent updates over a fixed parameter list. step() consumes the
/// gradients (applies the update, then zeroes them); calling it when any
/// parameter is missing a gradient throws std::runtime_error, which catches
/// graph-wiring bugs early.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 protected:
  explicit Optimizer(std::vector<Tensor> params);
  void require_grads() const;

  std::vector<Tensor> params_;
};

class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(std::vector<Tensor> params, Scalar lr, Scalar momentum = 0.0);
  void step() override;

 private:
  Scalar lr_, momentum_;
  std::vector<std::vector<Scalar>> velocity_;
};

class Adam : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, Scalar lr, Scalar beta1 = 0.9,
       Scalar beta2 = 0.999, Scalar eps = 1e-8);
  void step() override;
  std::int64_t step_count() const { return t_; }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<Scalar>> m_, v_;
};

}  // namespace incdet
