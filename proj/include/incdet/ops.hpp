#pragma once

#include <vector>

#include "incdet/tensor.hpp"

namespace incdet {

// Differentiable ops. Every op returns a fresh tensor, validates shapes
// (std::invalid_argument on mismatch) and checks its output for NaN/Inf.
// Passing a tape records the backward rule whenever any input requires grad;
// with tape == nullptr the op is plain inference.
//
// Gradients accumulate additively, so a tensor used twice collects both
// contributions. No broadcasting beyond the *_scalar ops.

// input [N,Ci,H,W] conv kernel [Co,Ci,Kh,Kw] -> [N,Co,Ho,Wo]
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad,
              Tape* tape = nullptr);

// input [N,Ci,H,W], kernel [Ci,Co,Kh,Kw] -> [N,Co,(H-1)s+Kh,(W-1)s+Kw].
// With a conv2d kernel [O,I,Kh,Kw] this is the adjoint of conv2d(.,kernel).
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        Tape* tape = nullptr);

// Pointwise head: input [N,C,H,W], code [C] -> [N,1,H,W]. Dedicated dot-loop
// implementation, independent of the general conv path.
Tensor conv1x1(const Tensor& input, const Tensor& code, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);

// Normalizes over each (sample, channel group); C must divide by groups.
// No affine term.
Tensor group_norm(const Tensor& x, int groups, Tape* tape = nullptr);

Tensor global_avg_pool(const Tensor& x, Tape* tape = nullptr);  // [N,C,H,W] -> [N,C]
Tensor mean_rows(const Tensor& x, Tape* tape = nullptr);        // [N,C] -> [C]

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add_scalar(const Tensor& a, Scalar s, Tape* tape = nullptr);
Tensor mul_scalar(const Tensor& a, Scalar s, Tape* tape = nullptr);

Tensor concat(const std::vector<Tensor>& xs, int axis, Tape* tape = nullptr);
Tensor sum_all(const Tensor& x, Tape* tape = nullptr);  // scalar Σx
Tensor reshape(const Tensor& x, std::vector<int> new_shape, Tape* tape = nullptr);

// Mean absolute difference over all elements; d/dpred = sign(pred-target)/N.
Tensor l1_loss(const Tensor& pred, const Tensor& target, Tape* tape = nullptr);

// Sum of mask-weighted absolute differences. mask is [N,1,H,W] (applied to
// every channel) or the full pred shape. Returns the un-normalized sum;
// callers divide by the supervised count via mul_scalar.
Tensor masked_l1_sum(const Tensor& pred, const Tensor& target,
                     const Tensor& mask, Tape* tape = nullptr);

Scalar sum_values(const Tensor& t);  // plain reduction, not recorded

// Correctly rounded sum (Shewchuk partials). The result depends only on the
// multiset of values, never their order — this is what makes set-pooled
// codes bit-identical under support permutation.
Scalar exact_sum(const Scalar* v, std::int64_t n);

}  // namespace incdet
