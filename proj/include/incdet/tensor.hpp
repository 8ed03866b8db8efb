#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace incdet {

// All model math runs in double so that gradient checks against central
// finite differences are meaningful. Checkpoints store f32 (see checkpoint.hpp).
using Scalar = double;

[[noreturn]] void check_fail(const char* expr, const char* file, int line,
                             const std::string& msg);

// Always-on invariant check (survives NDEBUG). Contract violations on the
// public API throw std::invalid_argument instead; this is for internal state.
#define INCDET_CHECK(cond, msg)                                  \
  do {                                                           \
    if (!(cond)) ::incdet::check_fail(#cond, __FILE__, __LINE__, (msg)); \
  } while (0)

struct TensorImpl {
  std::vector<int> shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool frozen = false;
};

/// Dense row-major tensor handle (NCHW for image-like data). Copies are
/// shallow; two Tensors compare identical when they share the same impl.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, Scalar value);
  static Tensor from(std::vector<int> shape, std::vector<Scalar> data);
  static Tensor scalar(Scalar value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const;
  int dim(int i) const;
  std::int64_t numel() const;

  Scalar* data();
  const Scalar* data() const;
  std::vector<Scalar>& data_vec();
  const std::vector<Scalar>& data_vec() const;

  // Flat offset for an NCHW index.
  std::int64_t offset4(int n, int c, int h, int w) const;
  Scalar at4(int n, int c, int h, int w) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool frozen() const;
  // Marks the tensor immutable for training: requires_grad is cleared and any
  // later gradient accumulation trips a hard check.
  void freeze();

  bool has_grad() const;
  const Scalar* grad() const;
  std::vector<Scalar>& grad_vec();  // allocates zeros on first use
  void zero_grad();
  void accumulate_grad(const Scalar* g, std::int64_t n);

  Scalar value() const;  // scalar tensors only

  Tensor clone() const;  // deep copy of data (grad not copied)

  TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Throws std::runtime_error naming `op` if any element is NaN/Inf.
void check_finite(const Tensor& t, const char* op);

std::string shape_str(const std::vector<int>& shape);

/// Linear record of differentiable ops. Construction order guarantees an
/// op's inputs precede it; backward() replays entries exactly once in
/// reverse.
class Tape {
 public:
  void record(const char* op, std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  void clear();

  friend void backward(const Tensor& loss, Tape& tape);

 private:
  struct Entry {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;
};

// Seeds d(loss)=1 and runs the reverse pass. `loss` must be a scalar produced
// on this tape. Gradients accumulate additively across uses of a tensor.
void backward(const Tensor& loss, Tape& tape);

}  // namespace incdet
