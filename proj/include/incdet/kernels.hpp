#pragma once

#include <cstdint>

#include "incdet/tensor.hpp"

namespace incdet {

struct Dims4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
};

int conv_out_dim(int in, int k, int stride, int pad);   // floor((in+2p-k)/s)+1
int convt_out_dim(int in, int k, int stride);           // (in-1)*s + k

// Convolution kernels in two builds with identical loop order per output
// element, so results are bit-equal between them:
//
//   kern:: — OpenMP-parallel over disjoint output elements
//   ref::  — plain serial loops, kept as the reference for tests/bench
//
// conv2d weights are laid out [out_ch, in_ch, kh, kw]; transposed-conv
// weights [in_ch, out_ch, kh, kw]. All writes are full overwrites (no
// accumulate), every reduction runs serially in a fixed order.

#define INCDET_DECLARE_KERNELS                                                \
  void conv2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd,  \
                      int stride, int pad, Scalar* y, Dims4 yd);             \
  void conv2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,    \
                             Dims4 wd, int stride, int pad, Scalar* gx,      \
                             Dims4 xd);                                      \
  void conv2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,   \
                              Dims4 xd, int stride, int pad, Scalar* gw,     \
                              Dims4 wd);                                     \
  void convt2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd, \
                       int stride, Scalar* y, Dims4 yd);                     \
  void convt2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,   \
                              Dims4 wd, int stride, Scalar* gx, Dims4 xd);   \
  void convt2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,  \
                               Dims4 xd, int stride, Scalar* gw, Dims4 wd);

namespace kern {
INCDET_DECLARE_KERNELS
}
namespace ref {
INCDET_DECLARE_KERNELS
}

#undef INCDET_DECLARE_KERNELS

}  // namespace incdet
