#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace incdet {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Intersection over union, in [0,1]. Degenerate boxes contribute zero area.
double iou(const Box& a, const Box& b);

struct GtBox {
  int image_id = 0;
  int class_id = 0;
  Box box;
};

struct DetBox {
  int image_id = 0;
  int class_id = 0;
  double score = 0;
  Box box;
};

enum class ClassGroup { kBase, kNovel };

struct ClassMetrics {
  int class_id = 0;
  bool evaluated = false;  // false when the class has no ground truth
  double ap = 0;           // mean over IoU thresholds 0.50:0.05:0.95
  double ap50 = 0;
  double ar10 = 0;         // mean recall, at most 10 detections per image
  int num_detections = 0;
  int num_gt = 0;
};

struct GroupMetrics {
  double ap = 0, ap50 = 0, ar10 = 0;
  int num_classes = 0;  // classes with ground truth (the ones averaged)
  int num_detections = 0;
  int num_gt = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;  // ordered by class_id
  GroupMetrics base, novel, all;
};

// Greedy score-sorted matching per class/image/threshold against unmatched
// ground truth at IoU >= t, all-point-interpolated PR curves, AP averaged
// over thresholds, AR@10 as mean recall. Group values are unweighted means
// over member classes that have ground truth. Throws std::invalid_argument
// if a detection or ground-truth class id is missing from group_map.
MetricsReport compute_metrics(const std::vector<DetBox>& detections,
                              const std::vector<GtBox>& ground_truths,
                              const std::map<int, ClassGroup>& group_map);

nlohmann::ordered_json metrics_to_json(const MetricsReport& report);

// Three-row plain-text table (novel / base / all classes).
std::string format_metrics_table(const MetricsReport& report);

// Interpolated precision/recall samples for one class at one IoU threshold,
// suitable for plotting. Precision is the right-to-left envelope, so the
// curve is non-increasing in recall.
struct PrCurve {
  int class_id = 0;
  std::vector<double> recall;
  std::vector<double> precision;
};

PrCurve pr_curve(const std::vector<DetBox>& detections,
                 const std::vector<GtBox>& ground_truths, int class_id,
                 double iou_threshold);

struct ForgettingPoint {
  int num_enrolled = 0;
  double all_ap = 0;
  double all_ar10 = 0;
  double base_ap = 0;
};

// Curve data for the enrolment sweep: snapshot i is "after i novel classes".
std::vector<ForgettingPoint> forgetting_series(
    const std::vector<MetricsReport>& snapshots);

// True iff every base-group AP/AP50/AR in the series equals the first
// snapshot's values exactly. `detail` (optional) receives a description of
// the first violation.
bool base_series_flat(const std::vector<MetricsReport>& snapshots,
                      std::string* detail = nullptr);

}  // namespace incdet
