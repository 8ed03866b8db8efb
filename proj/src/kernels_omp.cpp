// OpenMP builds of the conv kernels. Every output element is owned by one
// thread and reduced with the same serial inner-loop order as the ref::
// kernels, so results are bit-equal to the reference at any thread count.

#include "incdet/kernels.hpp"

namespace incdet::kern {

void conv2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd,
                    int stride, int pad, Scalar* y, Dims4 yd) {
  const std::int64_t total = yd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int ox = static_cast<int>(idx % yd.w);
    const int oy = static_cast<int>((idx / yd.w) % yd.h);
    const int oc = static_cast<int>((idx / (static_cast<std::int64_t>(yd.w) * yd.h)) % yd.c);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(yd.w) * yd.h * yd.c));
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
    y[idx] = acc;
  }
}

void conv2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,
                           Dims4 wd, int stride, int pad, Scalar* gx,
                           Dims4 xd) {
  const std::int64_t total = xd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int ix = static_cast<int>(idx % xd.w);
    const int iy = static_cast<int>((idx / xd.w) % xd.h);
    const int ic = static_cast<int>((idx / (static_cast<std::int64_t>(xd.w) * xd.h)) % xd.c);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(xd.w) * xd.h * xd.c));
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
    gx[idx] = acc;
  }
}

void conv2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,
                            Dims4 xd, int stride, int pad, Scalar* gw,
                            Dims4 wd) {
  const std::int64_t total = wd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int kx = static_cast<int>(idx % wd.w);
    const int ky = static_cast<int>((idx / wd.w) % wd.h);
    const int ic = static_cast<int>((idx / (static_cast<std::int64_t>(wd.w) * wd.h)) % wd.c);
    const int oc = static_cast<int>(idx / (static_cast<std::int64_t>(wd.w) * wd.h * wd.c));
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
    gw[idx] = acc;
  }
}

void convt2d_forward(const Scalar* x, Dims4 xd, const Scalar* w, Dims4 wd,
                     int stride, Scalar* y, Dims4 yd) {
  const std::int64_t total = yd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int ox = static_cast<int>(idx % yd.w);
    const int oy = static_cast<int>((idx / yd.w) % yd.h);
    const int oc = static_cast<int>((idx / (static_cast<std::int64_t>(yd.w) * yd.h)) % yd.c);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(yd.w) * yd.h * yd.c));
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
    y[idx] = acc;
  }
}

void convt2d_backward_input(const Scalar* gy, Dims4 yd, const Scalar* w,
                            Dims4 wd, int stride, Scalar* gx, Dims4 xd) {
  const std::int64_t total = xd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int ix = static_cast<int>(idx % xd.w);
    const int iy = static_cast<int>((idx / xd.w) % xd.h);
    const int ic = static_cast<int>((idx / (static_cast<std::int64_t>(xd.w) * xd.h)) % xd.c);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(xd.w) * xd.h * xd.c));
    Scalar acc = 0;
    for (int oc = 0; oc < yd.c; ++oc)
      for (int ky = 0; ky < wd.h; ++ky)
        for (int kx = 0; kx < wd.w; ++kx) {
          const int oy = iy * stride + ky;
          const int ox = ix * stride + kx;
          acc += gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox] *
                 w[((static_cast<std::int64_t>(ic) * wd.c + oc) * wd.h + ky) * wd.w + kx];
        }
    gx[idx] = acc;
  }
}

void convt2d_backward_kernel(const Scalar* gy, Dims4 yd, const Scalar* x,
                             Dims4 xd, int stride, Scalar* gw, Dims4 wd) {
  const std::int64_t total = wd.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int kx = static_cast<int>(idx % wd.w);
    const int ky = static_cast<int>((idx / wd.w) % wd.h);
    const int oc = static_cast<int>((idx / (static_cast<std::int64_t>(wd.w) * wd.h)) % wd.c);
    const int ic = static_cast<int>(idx / (static_cast<std::int64_t>(wd.w) * wd.h * wd.c));
    Scalar acc = 0;
    for (int n = 0; n < xd.n; ++n)
      for (int iy = 0; iy < xd.h; ++iy)
        for (int ix = 0; ix < xd.w; ++ix) {
          const int oy = iy * stride + ky;
          const int ox = ix * stride + kx;
          acc += x[((static_cast<std::int64_t>(n) * xd.c + ic) * xd.h + iy) * xd.w + ix] *
                 gy[((static_cast<std::int64_t>(n) * yd.c + oc) * yd.h + oy) * yd.w + ox];
        }
    gw[idx] = acc;
  }
}

}  // namespace incdet::kern
