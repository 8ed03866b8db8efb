#include "incdet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace incdet {

TargetMaps render_targets(const std::vector<BoxAnnotation>& boxes, int image_h,
                          int image_w, int stride, int num_classes) {
  if (stride < 1 || image_h % stride != 0 || image_w % stride != 0)
    throw std::invalid_argument("render_targets: stride " + std::to_string(stride) +
                                " must divide image dims " + std::to_string(image_w) +
                                "x" + std::to_string(image_h));
  const int hm = image_h / stride, wm = image_w / stride;

  TargetMaps t;
  t.centre = Tensor::zeros({num_classes, hm, wm});
  t.size = Tensor::zeros({2, hm, wm});
  t.offset = Tensor::zeros({2, hm, wm});
  t.valid_mask = Tensor::zeros({1, hm, wm});

  for (const auto& b : boxes) {
    if (b.class_id < 0 || b.class_id >= num_classes)
      throw std::invalid_argument("render_targets: class_id " + std::to_string(b.class_id) +
                                  " out of range [0," + std::to_string(num_classes) + ")");
    if (!(b.x2 > b.x1) || !(b.y2 > b.y1))
      throw std::invalid_argument("render_targets: degenerate box");
    if (b.x2 <= 0 || b.y2 <= 0 || b.x1 >= image_w || b.y1 >= image_h)
      throw std::invalid_argument("render_targets: box outside the image");

    const double cx = b.cx() / stride, cy = b.cy() / stride;
    const int cell_x = static_cast<int>(std::floor(cx));
    const int cell_y = static_cast<int>(std::floor(cy));
    if (cell_x < 0 || cell_x >= wm || cell_y < 0 || cell_y >= hm)
      throw std::invalid_argument("render_targets: box centre outside the image");

    // Size-adaptive splat; the divisor puts ~3 sigma across the smaller
    // box dimension so small objects get tight peaks.
    const double sigma = std::max(1.0, std::min(b.w(), b.h()) / (6.0 * stride));
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    Scalar* cm = t.centre.data() +
                 static_cast<std::int64_t>(b.class_id) * hm * wm;
    for (int y = std::max(0, cell_y - radius); y <= std::min(hm - 1, cell_y + radius); ++y)
      for (int x = std::max(0, cell_x - radius); x <= std::min(wm - 1, cell_x + radius); ++x) {
        const double d2 = static_cast<double>(x - cell_x) * (x - cell_x) +
                          static_cast<double>(y - cell_y) * (y - cell_y);
        const double v = std::exp(-d2 / (2.0 * sigma * sigma));
        Scalar& cell = cm[static_cast<std::int64_t>(y) * wm + x];
        cell = std::max(cell, static_cast<Scalar>(v));
      }

    const std::int64_t at = static_cast<std::int64_t>(cell_y) * wm + cell_x;
    t.size.data()[at] = b.w();
    t.size.data()[hm * wm + at] = b.h();
    t.offset.data()[at] = cx - cell_x;
    t.offset.data()[hm * wm + at] = cy - cell_y;
    t.valid_mask.data()[at] = 1.0;
  }
  return t;
}

std::vector<Peak> find_peaks(const Tensor& heatmap, double score_threshold,
                             int max_peaks) {
  if (heatmap.ndim() != 2)
    throw std::invalid_argument("find_peaks: heatmap must be 2D, got " +
                                shape_str(heatmap.shape()));
  check_finite(heatmap, "find_peaks");
  const int h = heatmap.dim(0), w = heatmap.dim(1);
  const Scalar* p = heatmap.data();

  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Scalar v = p[static_cast<std::int64_t>(y) * w + x];
      if (v < score_threshold) continue;
      bool is_peak = true;
      for (int dy = -1; dy <= 1 && is_peak; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;  // border: neighbour absent
          if (p[static_cast<std::int64_t>(ny) * w + nx] > v) {
            is_peak = false;
            break;
          }
        }
      if (is_peak) peaks.push_back({x, y, v});
    }

  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(peaks.size()) > max_peaks) peaks.resize(static_cast<std::size_t>(max_peaks));
  return peaks;
}

std::vector<Detection> decode_boxes(const std::vector<Peak>& peaks,
                                    const Tensor& offset_map,
                                    const Tensor& size_map, int stride,
                                    int class_id, int* clamped) {
  if (offset_map.ndim() != 3 || offset_map.dim(0) != 2)
    throw std::invalid_argument("decode_boxes: offset map must be [2,H,W]");
  if (size_map.shape() != offset_map.shape())
    throw std::invalid_argument("decode_boxes: size/offset shape mismatch");
  const int h = offset_map.dim(1), w = offset_map.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  std::vector<Detection> out;
  out.reserve(peaks.size());
  for (const auto& pk : peaks) {
    if (pk.x < 0 || pk.x >= w || pk.y < 0 || pk.y >= h)
      throw std::invalid_argument("decode_boxes: peak outside map bounds");
    const std::int64_t at = static_cast<std::int64_t>(pk.y) * w + pk.x;
    const double dx = offset_map.data()[at];
    const double dy = offset_map.data()[hw + at];
    double bw = size_map.data()[at];
    double bh = size_map.data()[hw + at];
    if (bw < 0 || bh < 0) {
      if (clamped) ++*clamped;
      bw = std::max(0.0, bw);
      bh = std::max(0.0, bh);
    }
    const double cx = (pk.x + dx) * stride;
    const double cy = (pk.y + dy) * stride;
    out.push_back({class_id, pk.score, cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2});
  }
  return out;
}

}  // namespace incdet
