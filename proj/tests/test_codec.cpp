#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "incdet/codec.hpp"
#include "incdet/rng.hpp"

using namespace incdet;

namespace {

// Independent peak definition via a 3x3 max-filter: a cell is a peak iff its
// value equals the dilated map and clears the threshold. Equivalent to the
// ">= all 8 neighbours" rule but computed by a different route.
std::vector<Peak> peaks_by_dilation(const Tensor& m, double thr, int max_peaks) {
  const int h = m.dim(0), w = m.dim(1);
  std::vector<Peak> out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Scalar window_max = -1e300;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          window_max = std::max(window_max, m.data()[static_cast<std::int64_t>(ny) * w + nx]);
        }
      const Scalar v = m.data()[static_cast<std::int64_t>(y) * w + x];
      if (v >= thr && v == window_max) out.push_back({x, y, v});
    }
  std::sort(out.begin(), out.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(out.size()) > max_peaks) out.resize(static_cast<std::size_t>(max_peaks));
  return out;
}

bool same_peaks(const std::vector<Peak>& a, const std::vector<Peak>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].score != b[i].score) return false;
  return true;
}

// Renders one box's splat onto a fresh map — the per-box brute-force
// reference used to check max-composition.
Tensor splat_single(const BoxAnnotation& b, int hm, int wm, int stride) {
  Tensor m = Tensor::zeros({hm, wm});
  const double cx = b.cx() / stride, cy = b.cy() / stride;
  const int cell_x = static_cast<int>(std::floor(cx));
  const int cell_y = static_cast<int>(std::floor(cy));
  const double sigma = std::max(1.0, std::min(b.w(), b.h()) / (6.0 * stride));
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));  // same window rule
  for (int y = 0; y < hm; ++y)
    for (int x = 0; x < wm; ++x) {
      if (std::abs(x - cell_x) > radius || std::abs(y - cell_y) > radius) continue;
      const double d2 = static_cast<double>(x - cell_x) * (x - cell_x) +
                        static_cast<double>(y - cell_y) * (y - cell_y);
      m.data()[static_cast<std::int64_t>(y) * wm + x] = std::exp(-d2 / (2 * sigma * sigma));
    }
  return m;
}

}  // namespace

TEST_CASE("render: cell-aligned centre gives exact 1.0 peak and zero offset") {
  BoxAnnotation b{0, 32 - 8, 32 - 6, 32 + 8, 32 + 6};  // centred at (32,32)
  auto t = render_targets({b}, 64, 64, 4, 3);
  CHECK(t.centre.shape() == std::vector<int>{3, 16, 16});
  // cell (8,8): row 8, col 8
  CHECK(t.centre.data()[8 * 16 + 8] == 1.0);
  CHECK(t.offset.data()[8 * 16 + 8] == 0.0);
  CHECK(t.offset.data()[16 * 16 + 8 * 16 + 8] == 0.0);
  CHECK(t.size.data()[8 * 16 + 8] == 16.0);
  CHECK(t.size.data()[16 * 16 + 8 * 16 + 8] == 12.0);
  CHECK(t.valid_mask.data()[8 * 16 + 8] == 1.0);
  // other classes' maps untouched
  CHECK(t.centre.data()[16 * 16 + 8 * 16 + 8] == 0.0);
}

TEST_CASE("render: sub-stride centre lands in the right cell with modular offset") {
  // centre (34, 33), r=4 -> cell (8,8), offset (0.5, 0.25)
  BoxAnnotation b{1, 34 - 5, 33 - 5, 34 + 5, 33 + 5};
  auto t = render_targets({b}, 64, 64, 4, 3);
  CHECK(t.centre.data()[16 * 16 + 8 * 16 + 8] == 1.0);
  CHECK(t.offset.data()[8 * 16 + 8] == doctest::Approx(0.5));
  CHECK(t.offset.data()[16 * 16 + 8 * 16 + 8] == doctest::Approx(0.25));
}

TEST_CASE("render: overlapping same-class splats equal element-wise max of singles") {
  BoxAnnotation a{0, 20, 20, 44, 44};
  BoxAnnotation b{0, 28, 24, 52, 48};
  auto both = render_targets({a, b}, 64, 64, 4, 2);
  Tensor ma = splat_single(a, 16, 16, 4);
  Tensor mb = splat_single(b, 16, 16, 4);
  for (int i = 0; i < 16 * 16; ++i)
    CHECK(both.centre.data()[i] == doctest::Approx(std::max(ma.data()[i], mb.data()[i])).epsilon(1e-12));
}

TEST_CASE("render: max-composition never reduces a cell") {
  BoxAnnotation a{0, 20, 20, 44, 44};
  BoxAnnotation b{0, 28, 24, 52, 48};
  auto one = render_targets({a}, 64, 64, 4, 2);
  auto both = render_targets({a, b}, 64, 64, 4, 2);
  for (int i = 0; i < 16 * 16; ++i)
    CHECK(both.centre.data()[i] >= one.centre.data()[i]);
}

TEST_CASE("render: splat decreases monotonically away from the centre") {
  BoxAnnotation b{0, 8, 8, 56, 56};  // big box, sigma > 1
  auto t = render_targets({b}, 64, 64, 4, 1);
  // walk right from the peak at (8,8): values must be non-increasing
  Scalar prev = 2.0;
  for (int x = 8; x < 16; ++x) {
    const Scalar v = t.centre.data()[8 * 16 + x];
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("render: contract violations throw") {
  CHECK_THROWS_AS(render_targets({BoxAnnotation{5, 0, 0, 8, 8}}, 64, 64, 4, 3),
                  std::invalid_argument);  // class out of range
  CHECK_THROWS_AS(render_targets({BoxAnnotation{0, 10, 10, 10, 20}}, 64, 64, 4, 3),
                  std::invalid_argument);  // degenerate
  CHECK_THROWS_AS(render_targets({BoxAnnotation{0, 100, 100, 120, 120}}, 64, 64, 4, 3),
                  std::invalid_argument);  // outside image
  CHECK_THROWS_AS(render_targets({}, 63, 64, 4, 3), std::invalid_argument);  // stride
}

TEST_CASE("find_peaks: trivial maps") {
  Tensor zeros = Tensor::zeros({5, 5});
  CHECK(find_peaks(zeros, 0.1, 10).empty());

  Tensor m = Tensor::zeros({5, 5});
  m.data()[2 * 5 + 2] = 0.9;
  auto p = find_peaks(m, 0.5, 10);
  REQUIRE(p.size() == 1);
  CHECK(p[0].x == 2);
  CHECK(p[0].y == 2);
  CHECK(p[0].score == 0.9);
}

TEST_CASE("find_peaks: plateau ties produce multiple peaks (>= rule)") {
  Tensor m = Tensor::zeros({3, 3});
  m.data()[4] = 0.7;  // centre
  m.data()[5] = 0.7;  // right of centre — equal: both are peaks
  auto p = find_peaks(m, 0.5, 10);
  CHECK(p.size() == 2);
}

TEST_CASE("find_peaks: matches the max-filter oracle on random maps with plateaus") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 5 + static_cast<int>(rng.uniform_int(0, 6));
    const int w = 5 + static_cast<int>(rng.uniform_int(0, 6));
    Tensor m = Tensor::zeros({h, w});
    // Quantized values force frequent plateaus.
    for (std::int64_t i = 0; i < m.numel(); ++i)
      m.data()[i] = std::round(rng.uniform() * 10.0) / 10.0;
    const double thr = rng.uniform(0.0, 0.6);
    const int cap = 1 + static_cast<int>(rng.uniform_int(0, 20));
    auto got = find_peaks(m, thr, cap);
    auto want = peaks_by_dilation(m, thr, cap);
    REQUIRE(same_peaks(got, want));
  }
}

TEST_CASE("decode: hand example from the point-attribute formulation") {
  Tensor offset = Tensor::zeros({2, 16, 16});
  Tensor size = Tensor::zeros({2, 16, 16});
  size.data()[8 * 16 + 8] = 16.0;
  size.data()[16 * 16 + 8 * 16 + 8] = 12.0;
  auto dets = decode_boxes({{8, 8, 0.9}}, offset, size, 4, 2);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_id == 2);
  CHECK(dets[0].score == 0.9);
  CHECK(dets[0].x1 == doctest::Approx(24));
  CHECK(dets[0].y1 == doctest::Approx(26));
  CHECK(dets[0].x2 == doctest::Approx(40));
  CHECK(dets[0].y2 == doctest::Approx(38));

  // delta (0.5, 0.25) shifts by (2, 1) pixels at stride 4
  offset.data()[8 * 16 + 8] = 0.5;
  offset.data()[16 * 16 + 8 * 16 + 8] = 0.25;
  auto shifted = decode_boxes({{8, 8, 0.9}}, offset, size, 4, 2);
  CHECK(shifted[0].x1 == doctest::Approx(26));
  CHECK(shifted[0].y1 == doctest::Approx(27));
}

TEST_CASE("decode: negative sizes clamp to zero and are counted") {
  Tensor offset = Tensor::zeros({2, 4, 4});
  Tensor size = Tensor::zeros({2, 4, 4});
  size.data()[5] = -3.0;
  size.data()[16 + 5] = 2.0;
  int clamped = 0;
  auto dets = decode_boxes({{1, 1, 0.5}}, offset, size, 4, 0, &clamped);
  CHECK(clamped == 1);
  CHECK(dets[0].x1 == dets[0].x2);
  CHECK(dets[0].y2 - dets[0].y1 == doctest::Approx(2.0));
}

TEST_CASE("encode/decode round-trip recovers boxes exactly from ground-truth maps") {
  Rng rng(55);
  for (int trial = 0; trial < 300; ++trial) {
    const double w = rng.uniform(6, 28);
    const double h = rng.uniform(6, 28);
    const double cx = rng.uniform(w / 2 + 1, 63 - w / 2);
    const double cy = rng.uniform(h / 2 + 1, 63 - h / 2);
    BoxAnnotation b{0, cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    auto t = render_targets({b}, 64, 64, 4, 1);

    // ground-truth peak location
    const int px = static_cast<int>(std::floor(cx / 4));
    const int py = static_cast<int>(std::floor(cy / 4));
    auto dets = decode_boxes({{px, py, 1.0}}, t.offset, t.size, 4, 0);
    REQUIRE(dets.size() == 1);
    // Offsets store the exact residual, so recovery is exact to fp rounding;
    // 0.5*stride is the contract bound, 1e-9 is what the math achieves.
    CHECK(std::abs(dets[0].x1 - b.x1) < 1e-9);
    CHECK(std::abs(dets[0].y1 - b.y1) < 1e-9);
    CHECK(std::abs(dets[0].x2 - b.x2) < 1e-9);
    CHECK(std::abs(dets[0].y2 - b.y2) < 1e-9);
  }
}

TEST_CASE("round-trip through detected (not oracle) peak stays within half a stride") {
  // When the peak is found from the rendered heatmap itself, the cell is the
  // floor of the true centre, so decode recovers the box exactly as well.
  BoxAnnotation b{0, 13.3, 21.7, 37.9, 44.1};
  auto t = render_targets({b}, 64, 64, 4, 1);
  Tensor hm = Tensor::from({16, 16},
                           std::vector<Scalar>(t.centre.data(), t.centre.data() + 256));
  auto peaks = find_peaks(hm, 0.99, 1);
  REQUIRE(peaks.size() == 1);
  auto dets = decode_boxes(peaks, t.offset, t.size, 4, 0);
  CHECK(std::abs(dets[0].x1 - b.x1) < 2.0);  // 0.5 * stride
  CHECK(std::abs(dets[0].y1 - b.y1) < 2.0);
  CHECK(std::abs(dets[0].x2 - b.x2) < 2.0);
  CHECK(std::abs(dets[0].y2 - b.y2) < 2.0);
}
