#pragma once

#include <vector>

#include "incdet/tensor.hpp"

namespace incdet {

struct BoxAnnotation {
  int class_id = 0;
  // Corners in input-image pixels, x2 > x1, y2 > y1.
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
};

struct Detection {
  int class_id = 0;
  double score = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

/// Regression targets for one image at map resolution (H/stride × W/stride).
/// centre: [K,Hm,Wm] in [0,1] with exact 1.0 at each object's cell.
/// size:   [2,Hm,Wm] — (width, height) in input pixels at object cells.
/// offset: [2,Hm,Wm] — (x,y) sub-stride residuals in [0,1) at object cells.
/// valid_mask: [1,Hm,Wm] — 1 where size/offset are supervised.
/// Cells belonging to class k are recoverable as {centre[k] == 1.0}: the
/// splat peaks at exactly 1.0 only at annotated cells.
struct TargetMaps {
  Tensor centre;
  Tensor size;
  Tensor offset;
  Tensor valid_mask;
};

TargetMaps render_targets(const std::vector<BoxAnnotation>& boxes, int image_h,
                          int image_w, int stride, int num_classes);

struct Peak {
  int x = 0;  // column in map cells
  int y = 0;  // row in map cells
  double score = 0;
};

// Cells >= all existing 8-neighbours and >= threshold, sorted by score
// descending (ties broken by row then column), truncated to max_peaks.
std::vector<Peak> find_peaks(const Tensor& heatmap, double score_threshold,
                             int max_peaks);

// Box centres at ((x+dx)*stride, (y+dy)*stride), extents from the size map.
// Negative predicted sizes clamp to zero; *clamped counts the occurrences.
std::vector<Detection> decode_boxes(const std::vector<Peak>& peaks,
                                    const Tensor& offset_map,
                                    const Tensor& size_map, int stride,
                                    int class_id, int* clamped = nullptr);

}  // namespace incdet
