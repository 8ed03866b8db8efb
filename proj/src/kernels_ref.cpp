// Serial reference convolutions. Straight-line loops, no tricks; the OpenMP
// kernels in kernels_omp.cpp must stay bit-equal to these (same reduction
// order per output element), which the kernel tests assert.

#include <stdexcept>

#include "incdet/kernels.hpp"

namespace incdet {

int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

int convt_out_dim(int in, int k, int stride) { return (in - 1) * stride + k; }

namespace ref {

void conv2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd,
                    int stride, int pad, Scalar* y, Dims4 yd) {
  for (int n = 0; n < yd.n; ++n)
    for (int oc = 0; oc < yd.c; ++oc)
      for (int oy = 0; oy < yd.h; ++oy)
        for (int ox = 0; ox < yd.w; ++ox) {
          Scalar acc = 0;
          for (int ic = 0; ic < wd.c; ++ic)
            for (int ky = 0; ky < wd.h; ++ky)
              for (int kx = 0; kx < wd.w; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= xd.h || ix < 0 || ix >= xd.w) continue;
                acc += x[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] *
                       w[((static_cast<std::int64_t>(oc) * wd.c + ic) * wd.h + ky) * wd.w + kx];
              }
          y[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] = acc;
        }
}

void conv2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,
                           Dims4 wd, int stride, int pad, Scalar* gx,
                           Dims4 xd) {
  for (int n = 0; n < xd.n; ++n)
    for (int ic = 0; ic < xd.c; ++ic)
      for (int iy = 0; iy < xd.h; ++iy)
        for (int ix = 0; ix < xd.w; ++ix) {
          Scalar acc = 0;
          for (int oc = 0; oc < yd.c; ++oc)
            for (int ky = 0; ky < wd.h; ++ky)
              for (int kx = 0; kx < wd.w; ++kx) {
                const int ty = iy + pad - ky;
                const int tx = ix + pad - kx;
                if (ty < 0 || tx < 0 || ty % stride || tx % stride) continue;
                const int oy = ty / stride;
                const int ox = tx / stride;
                if (oy >= yd.h || ox >= yd.w) continue;
                acc += gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] *
                       w[((static_cast<std::int64_t>(oc) * wd.c + ic) * wd.h + ky) * wd.w + kx];
              }
          gx[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] = acc;
        }
}

void conv2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,
                            Dims4 xd, int stride, int pad, Scalar* gw,
                            Dims4 wd) {
  for (int oc = 0; oc < wd.n; ++oc)
    for (int ic = 0; ic < wd.c; ++ic)
      for (int ky = 0; ky < wd.h; ++ky)
        for (int kx = 0; kx < wd.w; ++kx) {
          Scalar acc = 0;
          for (int n = 0; n < yd.n; ++n)
            for (int oy = 0; oy < yd.h; ++oy)
              for (int ox = 0; ox < yd.w; ++ox) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= xd.h || ix < 0 || ix >= xd.w) continue;
                acc += gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] *
                       x[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix];
              }
          gw[((static_cast<std::int64_t>(oc) * wd.c + ic) * wd.h + ky) * wd.w + kx] = acc;
        }
}

void convt2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd,
                     int stride, Scalar* y, Dims4 yd) {
  for (int n = 0; n < yd.n; ++n)
    for (int oc = 0; oc < yd.c; ++oc)
      for (int oy = 0; oy < yd.h; ++oy)
        for (int ox = 0; ox < yd.w; ++ox) {
          Scalar acc = 0;
          for (int ic = 0; ic < wd.n; ++ic)
            for (int ky = 0; ky < wd.h; ++ky)
              for (int kx = 0; kx < wd.w; ++kx) {
                const int ty = oy - ky;
                const int tx = ox - kx;
                if (ty < 0 || tx < 0 || ty % stride || tx % stride) continue;
                const int iy = ty / stride;
                const int ix = tx / stride;
                if (iy >= xd.h || ix >= xd.w) continue;
                acc += x[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] *
                       w[((static_cast<std::int64_t>(ic) * wd.c + oc) * wd.h + ky) * wd.w + kx];
              }
          y[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] = acc;
        }
}

void convt2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,
                            Dims4 wd, int stride, Scalar* gx, Dims4 xd) {
  for (int n = 0; n < xd.n; ++n)
    for (int ic = 0; ic < xd.c; ++ic)
      for (int iy = 0; iy < xd.h; ++iy)
        for (int ix = 0; ix < xd.w; ++ix) {
          Scalar acc = 0;
          for (int oc = 0; oc < yd.c; ++oc)
            for (int ky = 0; ky < wd.h; ++ky)
              for (int kx = 0; kx < wd.w; ++kx) {
                const int oy = iy * stride + ky;
                const int ox = ix * stride + kx;
                acc += gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] *
                       w[((static_cast<std::int64_t>(ic) * wd.c + oc) * wd.h + ky) * wd.w + kx];
              }
          gx[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] = acc;
        }
}

void convt2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,
                             Dims4 xd, int stride, Scalar* gw, Dims4 wd) {
  for (int ic = 0; ic < wd.n; ++ic)
    for (int oc = 0; oc < wd.c; ++oc)
      for (int ky = 0; ky < wd.h; ++ky)
        for (int kx = 0; kx < wd.w; ++kx) {
          Scalar acc = 0;
          for (int n = 0; n < xd.n; ++n)
            for (int iy = 0; iy < xd.h; ++iy)
              for (int ix = 0; ix < xd.w; ++ix) {
                const int oy = iy * stride + ky;
                const int ox = ix * stride + kx;
                acc += x[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] *
                       gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox];
              }
          gw[((static_cast<std::int64_t>(ic) * wd.c + oc) * wd.h + ky) * wd.w + kx] = acc;
        }
}

}  // namespace ref
}  // namespace incdet
