#include "incdet/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace incdet {

void check_fail(const char* expr, const char* file, int line,
                const std::string& msg) {
  std::cerr << "incdet check failed: " << msg << "\n  expr: " << expr
            << "\n  at: " << file << ":" << line << std::endl;
  std::abort();
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dim must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, Scalar value) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Scalar> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  Tensor t;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::scalar(Scalar value) { return from({1}, {value}); }

const std::vector<int>& Tensor::shape() const {
  INCDET_CHECK(defined(), "shape() on undefined tensor");
  return impl_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const {
  const auto& s = shape();
  INCDET_CHECK(i >= 0 && i < static_cast<int>(s.size()), "dim index out of range");
  return s[i];
}

std::int64_t Tensor::numel() const {
  INCDET_CHECK(defined(), "numel() on undefined tensor");
  return static_cast<std::int64_t>(impl_->data.size());
}

Scalar* Tensor::data() {
  INCDET_CHECK(defined(), "data() on undefined tensor");
  return impl_->data.data();
}

const Scalar* Tensor::data() const {
  INCDET_CHECK(defined(), "data() on undefined tensor");
  return impl_->data.data();
}

std::vector<Scalar>& Tensor::data_vec() {
  INCDET_CHECK(defined(), "data_vec() on undefined tensor");
  return impl_->data;
}

const std::vector<Scalar>& Tensor::data_vec() const {
  INCDET_CHECK(defined(), "data_vec() on undefined tensor");
  return impl_->data;
}

std::int64_t Tensor::offset4(int n, int c, int h, int w) const {
  const auto& s = shape();
  INCDET_CHECK(s.size() == 4, "offset4 on non-4D tensor " + shape_str(s));
  return ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w;
}

Scalar Tensor::at4(int n, int c, int h, int w) const {
  return data()[offset4(n, c, h, w)];
}

bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  INCDET_CHECK(defined(), "set_requires_grad on undefined tensor");
  impl_->requires_grad = rg;
}

bool Tensor::frozen() const { return defined() && impl_->frozen; }

void Tensor::freeze() {
  INCDET_CHECK(defined(), "freeze on undefined tensor");
  impl_->frozen = true;
  impl_->requires_grad = false;
}

bool Tensor::has_grad() const { return defined() && !impl_->grad.empty(); }

const Scalar* Tensor::grad() const {
  INCDET_CHECK(has_grad(), "grad() on tensor without gradient");
  return impl_->grad.data();
}

std::vector<Scalar>& Tensor::grad_vec() {
  INCDET_CHECK(defined(), "grad_vec() on undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  INCDET_CHECK(defined(), "zero_grad() on undefined tensor");
  impl_->grad.clear();
}

void Tensor::accumulate_grad(const Scalar* g, std::int64_t n) {
  INCDET_CHECK(defined(), "accumulate_grad on undefined tensor");
  INCDET_CHECK(!impl_->frozen, "gradient reached a frozen tensor");
  INCDET_CHECK(n == numel(), "gradient length mismatch");
  auto& gv = grad_vec();
  for (std::int64_t i = 0; i < n; ++i) gv[static_cast<std::size_t>(i)] += g[i];
}

Scalar Tensor::value() const {
  INCDET_CHECK(numel() == 1, "value() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  INCDET_CHECK(defined(), "clone() on undefined tensor");
  Tensor t = Tensor::from(impl_->shape, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void check_finite(const Tensor& t, const char* op) {
  const Scalar* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw std::runtime_error(std::string("non-finite value produced by ") + op +
                               " at flat index " + std::to_string(i));
  }
}

void Tape::record(const char* op, std::function<void()> backward_fn) {
  entries_.push_back({op, std::move(backward_fn)});
}

void Tape::clear() { entries_.clear(); }

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  Tensor l = loss;
  l.grad_vec()[0] += 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it)
    it->backward_fn();
}

}  // namespace incdet
