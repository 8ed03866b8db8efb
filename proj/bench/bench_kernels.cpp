// Timing comparison of the OpenMP kernels against the serial reference.
// Also re-asserts bit-equality on the benchmarked shapes, since that is the
// whole contract that lets the two builds coexist.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "incdet/kernels.hpp"
#include "incdet/rng.hpp"

using namespace incdet;

namespace {

std::vector<Scalar> random_vec(std::int64_t n, Rng& rng) {
  std::vector<Scalar> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const double total =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                t0)
          .count();
  return total / reps;
}

struct Case {
  const char* name;
  Dims4 xd, wd;
  int stride, pad;
  bool transposed;
};

void run_case(const Case& c, Rng& rng) {
  Dims4 yd;
  if (!c.transposed) {
    yd = {c.xd.n, c.wd.n, conv_out_dim(c.xd.h, c.wd.h, c.stride, c.pad),
          conv_out_dim(c.xd.w, c.wd.w, c.stride, c.pad)};
  } else {
    yd = {c.xd.n, c.wd.c, convt_out_dim(c.xd.h, c.wd.h, c.stride),
          convt_out_dim(c.xd.w, c.wd.w, c.stride)};
  }
  const auto x = random_vec(c.xd.numel(), rng);
  const auto w = random_vec(c.wd.numel(), rng);
  std::vector<Scalar> y_omp(yd.numel()), y_ref(yd.numel());

  auto omp_fn = [&] {
    if (!c.transposed)
      kern::conv2d_forward(x.data(), c.xd, w.data(), c.wd, c.stride, c.pad,
                           y_omp.data(), yd);
    else
      kern::convt2d_forward(x.data(), c.xd, w.data(), c.wd, c.stride,
                            y_omp.data(), yd);
  };
  auto ref_fn = [&] {
    if (!c.transposed)
      ref::conv2d_forward(x.data(), c.xd, w.data(), c.wd, c.stride, c.pad,
                          y_ref.data(), yd);
    else
      ref::convt2d_forward(x.data(), c.xd, w.data(), c.wd, c.stride,
                           y_ref.data(), yd);
  };

  const int reps = 5;
  const double ms_omp = time_ms(omp_fn, reps);
  const double ms_ref = time_ms(ref_fn, reps);
  const bool equal =
      std::memcmp(y_omp.data(), y_ref.data(), yd.numel() * sizeof(Scalar)) == 0;

  std::printf("%-28s omp %8.2f ms   serial %8.2f ms   speedup %5.2fx   %s\n",
              c.name, ms_omp, ms_ref, ms_ref / ms_omp,
              equal ? "bit-equal" : "MISMATCH");
  if (!equal) std::exit(1);
}

}  // namespace

int main() {
  Rng rng(12345);
  // the shapes the detector actually runs, plus one oversized stress case
  const Case cases[] = {
      {"conv 8x3x64x64 k3s2 c16", {8, 3, 64, 64}, {16, 3, 3, 3}, 2, 1, false},
      {"conv 8x16x32x32 k3s2 c32", {8, 16, 32, 32}, {32, 16, 3, 3}, 2, 1, false},
      {"conv 8x32x16x16 k3s2 c64", {8, 32, 16, 16}, {64, 32, 3, 3}, 2, 1, false},
      {"deconv 8x64x4x4 k2s2 c48", {8, 64, 4, 4}, {64, 48, 2, 2}, 2, 0, true},
      {"deconv 8x48x8x8 k2s2 c32", {8, 48, 8, 8}, {48, 32, 2, 2}, 2, 0, true},
      {"conv 16x32x64x64 k3s1 c32 (stress)",
       {16, 32, 64, 64},
       {32, 32, 3, 3},
       1,
       1,
       false},
  };
  for (const auto& c : cases) run_case(c, rng);
  return 0;
}
