#include "incdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace incdet {
namespace {

constexpr double kThresholds[] = {0.50, 0.55, 0.60, 0.65, 0.70,
                                  0.75, 0.80, 0.85, 0.90, 0.95};
constexpr int kNumThresholds = 10;
constexpr int kArMaxDets = 10;

double box_area(const Box& b) {
  return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
}

// Detections of one class, globally ordered by (score desc, insertion asc).
// The insertion index doubles as the stable tie-break everywhere.
struct RankedDet {
  int index = 0;  // position in the caller's detection list
  int image_id = 0;
  double score = 0;
  Box box;
};

struct ClassInstance {
  std::vector<RankedDet> dets;               // already rank-sorted
  std::map<int, std::vector<Box>> gt_by_image;
  int num_gt = 0;
};

bool rank_less(const RankedDet& a, const RankedDet& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

// Greedy matching at one IoU threshold. Returns a TP flag per detection in
// rank order. When `max_per_image` > 0, lower-ranked detections beyond the
// cap are dropped from consideration (flagged neither TP nor counted; the
// caller uses matched_gt only in that mode).
std::vector<char> match_at(const ClassInstance& inst, double t,
                           int max_per_image, int* matched_gt) {
  std::vector<char> tp(inst.dets.size(), 0);
  std::map<int, std::vector<char>> used;  // image -> per-GT matched flag
  for (const auto& [img, boxes] : inst.gt_by_image)
    used[img] = std::vector<char>(boxes.size(), 0);
  std::map<int, int> taken;  // image -> detections considered so far
  int matched = 0;
  for (std::size_t i = 0; i < inst.dets.size(); ++i) {
    const RankedDet& d = inst.dets[i];
    if (max_per_image > 0 && ++taken[d.image_id] > max_per_image) continue;
    auto it = inst.gt_by_image.find(d.image_id);
    if (it == inst.gt_by_image.end()) continue;
    const auto& boxes = it->second;
    auto& flags = used[d.image_id];
    int best = -1;
    double best_iou = t;  // require IoU >= t
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (flags[j]) continue;
      const double v = iou(d.box, boxes[j]);
      if (v > best_iou || (best < 0 && v == best_iou)) {
        best = static_cast<int>(j);
        best_iou = v;
      }
    }
    if (best >= 0) {
      flags[best] = 1;
      tp[i] = 1;
      ++matched;
    }
  }
  if (matched_gt) *matched_gt = matched;
  return tp;
}

// Area under the all-point-interpolated PR curve.
double ap_from_flags(const std::vector<char>& tp, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int cum_tp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    cum_tp += tp[i];
    precision.push_back(static_cast<double>(cum_tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(cum_tp) / num_gt);
  }
  // running max from the right turns precision into its envelope
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0, prev_r = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double inter =
      std::max(0.0, ix2 - ix1) * std::max(0.0, iy2 - iy1);
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

MetricsReport compute_metrics(const std::vector<DetBox>& detections,
                              const std::vector<GtBox>& ground_truths,
                              const std::map<int, ClassGroup>& group_map) {
  for (const auto& d : detections)
    if (!group_map.count(d.class_id))
      throw std::invalid_argument("compute_metrics: detection class " +
                                  std::to_string(d.class_id) +
                                  " not in group map");
  for (const auto& g : ground_truths)
    if (!group_map.count(g.class_id))
      throw std::invalid_argument("compute_metrics: ground-truth class " +
                                  std::to_string(g.class_id) +
                                  " not in group map");

  std::map<int, ClassInstance> per_class;
  for (const auto& [cid, grp] : group_map) {
    (void)grp;
    per_class[cid];  // every registered class gets an entry
  }
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    per_class[d.class_id].dets.push_back(
        {static_cast<int>(i), d.image_id, d.score, d.box});
  }
  for (const auto& g : ground_truths) {
    auto& inst = per_class[g.class_id];
    inst.gt_by_image[g.image_id].push_back(g.box);
    ++inst.num_gt;
  }

  MetricsReport report;
  for (auto& [cid, inst] : per_class) {
    std::stable_sort(inst.dets.begin(), inst.dets.end(), rank_less);
    ClassMetrics cm;
    cm.class_id = cid;
    cm.num_detections = static_cast<int>(inst.dets.size());
    cm.num_gt = inst.num_gt;
    cm.evaluated = inst.num_gt > 0;
    if (cm.evaluated) {
      double ap_sum = 0, ar_sum = 0;
      for (int ti = 0; ti < kNumThresholds; ++ti) {
        const double t = kThresholds[ti];
        const double ap = ap_from_flags(match_at(inst, t, 0, nullptr),
                                        inst.num_gt);
        ap_sum += ap;
        if (ti == 0) cm.ap50 = ap;
        int matched = 0;
        match_at(inst, t, kArMaxDets, &matched);
        ar_sum += static_cast<double>(matched) / inst.num_gt;
      }
      cm.ap = ap_sum / kNumThresholds;
      cm.ar10 = ar_sum / kNumThresholds;
    }
    report.per_class.push_back(cm);
  }

  auto fold = [&](GroupMetrics& g, const ClassMetrics& cm) {
    g.num_detections += cm.num_detections;
    g.num_gt += cm.num_gt;
    if (!cm.evaluated) return;
    g.ap += cm.ap;
    g.ap50 += cm.ap50;
    g.ar10 += cm.ar10;
    ++g.num_classes;
  };
  for (const auto& cm : report.per_class) {
    const ClassGroup grp = group_map.at(cm.class_id);
    fold(grp == ClassGroup::kBase ? report.base : report.novel, cm);
    fold(report.all, cm);
  }
  for (GroupMetrics* g : {&report.base, &report.novel, &report.all}) {
    if (g->num_classes > 0) {
      g->ap /= g->num_classes;
      g->ap50 /= g->num_classes;
      g->ar10 /= g->num_classes;
    }
  }
  return report;
}

nlohmann::ordered_json metrics_to_json(const MetricsReport& report) {
  auto group = [](const GroupMetrics& g) {
    return nlohmann::ordered_json{{"ap", g.ap},
                                  {"ap50", g.ap50},
                                  {"ar10", g.ar10},
                                  {"num_classes", g.num_classes},
                                  {"num_detections", g.num_detections},
                                  {"num_gt", g.num_gt}};
  };
  nlohmann::ordered_json j;
  j["groups"] = {{"novel", group(report.novel)},
                 {"base", group(report.base)},
                 {"all", group(report.all)}};
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& cm : report.per_class)
    j["per_class"].push_back({{"class_id", cm.class_id},
                              {"evaluated", cm.evaluated},
                              {"ap", cm.ap},
                              {"ap50", cm.ap50},
                              {"ar10", cm.ar10},
                              {"num_detections", cm.num_detections},
                              {"num_gt", cm.num_gt}});
  return j;
}

std::string format_metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  os << "group           AP      AP50    AR@10   dets    gt\n";
  auto row = [&os](const char* name, const GroupMetrics& g) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-14s %7.4f %7.4f %7.4f %6d %6d\n", name,
                  g.ap, g.ap50, g.ar10, g.num_detections, g.num_gt);
    os << buf;
  };
  row("novel classes", report.novel);
  row("base classes", report.base);
  row("all classes", report.all);
  return os.str();
}

PrCurve pr_curve(const std::vector<DetBox>& detections,
                 const std::vector<GtBox>& ground_truths, int class_id,
                 double iou_threshold) {
  ClassInstance inst;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    if (d.class_id == class_id)
      inst.dets.push_back({static_cast<int>(i), d.image_id, d.score, d.box});
  }
  for (const auto& g : ground_truths)
    if (g.class_id == class_id) {
      inst.gt_by_image[g.image_id].push_back(g.box);
      ++inst.num_gt;
    }
  std::stable_sort(inst.dets.begin(), inst.dets.end(), rank_less);

  PrCurve curve;
  curve.class_id = class_id;
  if (inst.num_gt == 0) return curve;
  const std::vector<char> tp = match_at(inst, iou_threshold, 0, nullptr);
  std::vector<double> precision, recall;
  int cum_tp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    cum_tp += tp[i];
    precision.push_back(static_cast<double>(cum_tp) /
                        static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(cum_tp) / inst.num_gt);
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  // anchor at recall 0 so the plotted curve starts on the axis
  curve.recall.push_back(0.0);
  curve.precision.push_back(precision.empty() ? 0.0 : precision.front());
  for (std::size_t i = 0; i < tp.size(); ++i) {
    curve.recall.push_back(recall[i]);
    curve.precision.push_back(precision[i]);
  }
  return curve;
}

std::vector<ForgettingPoint> forgetting_series(
    const std::vector<MetricsReport>& snapshots) {
  std::vector<ForgettingPoint> out;
  for (std::size_t i = 0; i < snapshots.size(); ++i)
    out.push_back({static_cast<int>(i), snapshots[i].all.ap,
                   snapshots[i].all.ar10, snapshots[i].base.ap});
  return out;
}

bool base_series_flat(const std::vector<MetricsReport>& snapshots,
                      std::string* detail) {
  if (snapshots.empty()) return true;
  const GroupMetrics& first = snapshots.front().base;
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    const GroupMetrics& g = snapshots[i].base;
    if (g.ap != first.ap || g.ap50 != first.ap50 || g.ar10 != first.ar10) {
      if (detail) {
        std::ostringstream os;
        os << "base metrics changed at snapshot " << i << ": AP " << first.ap
           << " -> " << g.ap << ", AP50 " << first.ap50 << " -> " << g.ap50
           << ", AR@10 " << first.ar10 << " -> " << g.ar10;
        *detail = os.str();
      }
      return false;
    }
  }
  return true;
}

}  // namespace incdet
