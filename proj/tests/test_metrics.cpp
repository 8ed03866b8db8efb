#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

#include "incdet/metrics.hpp"
#include "incdet/rng.hpp"

using namespace incdet;

namespace {

// Same matching rule, deliberately different machinery: selection-order walk
// over the raw detection list and an O(n^2) "max precision at recall >= r"
// scan instead of the envelope trick.
double naive_ap_at(const std::vector<DetBox>& dets,
                   const std::vector<GtBox>& gts, double t) {
  std::vector<int> order;
  std::vector<char> picked(dets.size(), 0);
  for (std::size_t n = 0; n < dets.size(); ++n) {
    int best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (picked[i]) continue;
      if (best < 0 || dets[i].score > dets[best].score) best = static_cast<int>(i);
    }
    picked[best] = 1;
    order.push_back(best);
  }
  std::vector<char> gt_used(gts.size(), 0);
  std::vector<double> prec, rec;
  std::vector<char> tp_flags;
  int tp = 0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const DetBox& d = dets[order[n]];
    int best = -1;
    double best_v = 0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (gt_used[j] || gts[j].image_id != d.image_id) continue;
      const double v = iou(d.box, gts[j].box);
      if (v >= t && (best < 0 || v > best_v)) {
        best = static_cast<int>(j);
        best_v = v;
      }
    }
    if (best >= 0) {
      gt_used[best] = 1;
      ++tp;
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
    prec.push_back(static_cast<double>(tp) / (n + 1));
    rec.push_back(gts.empty() ? 0.0 : static_cast<double>(tp) / gts.size());
  }
  double ap = 0, prev_r = 0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    if (!tp_flags[n]) continue;
    double p_env = 0;
    for (std::size_t m = 0; m < order.size(); ++m)
      if (rec[m] >= rec[n]) p_env = std::max(p_env, prec[m]);
    ap += (rec[n] - prev_r) * p_env;
    prev_r = rec[n];
  }
  return ap;
}

MetricsReport one_class_metrics(const std::vector<DetBox>& dets,
                                const std::vector<GtBox>& gts) {
  return compute_metrics(dets, gts, {{0, ClassGroup::kBase}});
}

Box random_box(Rng& rng) {
  const double x = std::floor(rng.uniform() * 16.0);
  const double y = std::floor(rng.uniform() * 16.0);
  const double w = 2.0 + std::floor(rng.uniform() * 8.0);
  const double h = 2.0 + std::floor(rng.uniform() * 8.0);
  return {x, y, x + w, y + h};
}

}  // namespace

TEST_CASE("iou hand values") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {5, 5, 7, 7}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
  CHECK(iou({0, 0, 2, 2}, {2, 0, 4, 2}) == 0.0);  // touching edges
}

TEST_CASE("perfect detections give AP = AR = 1, none give 0") {
  std::vector<GtBox> gts = {{0, 0, {1, 1, 9, 9}}, {1, 0, {4, 4, 12, 12}}};
  std::vector<DetBox> dets = {{0, 0, 0.9, {1, 1, 9, 9}},
                              {1, 0, 0.8, {4, 4, 12, 12}}};
  auto r = one_class_metrics(dets, gts);
  CHECK(r.per_class[0].ap == 1.0);
  CHECK(r.per_class[0].ap50 == 1.0);
  CHECK(r.per_class[0].ar10 == 1.0);
  CHECK(r.all.ap == 1.0);

  auto r0 = one_class_metrics({}, gts);
  CHECK(r0.per_class[0].ap == 0.0);
  CHECK(r0.per_class[0].ar10 == 0.0);
}

TEST_CASE("unknown class id is rejected") {
  std::vector<GtBox> gts = {{0, 3, {1, 1, 9, 9}}};
  CHECK_THROWS_AS(compute_metrics({}, gts, {{0, ClassGroup::kBase}}),
                  std::invalid_argument);
  std::vector<DetBox> dets = {{0, 7, 0.5, {1, 1, 9, 9}}};
  CHECK_THROWS_AS(compute_metrics(dets, {}, {{0, ClassGroup::kBase}}),
                  std::invalid_argument);
}

TEST_CASE("hand-traced micro fixture") {
  std::ifstream in(INCDET_TEST_DATA_DIR "/metrics_fixture.json");
  REQUIRE(in.good());
  nlohmann::json fx = nlohmann::json::parse(in);

  std::vector<GtBox> gts;
  for (const auto& g : fx["ground_truths"])
    gts.push_back({g["image_id"], g["class_id"],
                   {g["box"][0], g["box"][1], g["box"][2], g["box"][3]}});
  std::vector<DetBox> dets;
  for (const auto& d : fx["detections"])
    dets.push_back({d["image_id"], d["class_id"], d["score"],
                    {d["box"][0], d["box"][1], d["box"][2], d["box"][3]}});
  std::map<int, ClassGroup> groups;
  for (const auto& [key, val] : fx["groups"].items())
    groups[std::stoi(key)] =
        val == "base" ? ClassGroup::kBase : ClassGroup::kNovel;

  auto r = compute_metrics(dets, gts, groups);
  auto close = [](double a, double b) { return doctest::Approx(a).epsilon(1e-12) == b; };

  const auto& e = fx["expected"];
  REQUIRE(r.per_class.size() == 2);
  CHECK(close(r.per_class[0].ap, e["class_0"]["ap"]));
  CHECK(close(r.per_class[0].ap50, e["class_0"]["ap50"]));
  CHECK(close(r.per_class[0].ar10, e["class_0"]["ar10"]));
  CHECK(r.per_class[0].num_detections == e["class_0"]["num_detections"]);
  CHECK(r.per_class[0].num_gt == e["class_0"]["num_gt"]);
  CHECK(close(r.per_class[1].ap, e["class_1"]["ap"]));
  CHECK(close(r.per_class[1].ap50, e["class_1"]["ap50"]));
  CHECK(close(r.per_class[1].ar10, e["class_1"]["ar10"]));
  CHECK(close(r.base.ap, e["base"]["ap"]));
  CHECK(close(r.base.ap50, e["base"]["ap50"]));
  CHECK(close(r.novel.ap, e["novel"]["ap"]));
  CHECK(close(r.all.ap, e["all"]["ap"]));
  CHECK(close(r.all.ap50, e["all"]["ap50"]));
  CHECK(close(r.all.ar10, e["all"]["ar10"]));
  CHECK(r.all.num_detections == e["all"]["num_detections"]);
  CHECK(r.all.num_gt == e["all"]["num_gt"]);

  // count additivity
  CHECK(r.all.num_detections == r.base.num_detections + r.novel.num_detections);
  CHECK(r.all.num_gt == r.base.num_gt + r.novel.num_gt);
}

TEST_CASE("random instances match the brute-force oracle") {
  Rng rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    const int n_img = 1 + static_cast<int>(rng.uniform() * 2.0);
    const int n_gt = static_cast<int>(rng.uniform() * 6.0);   // 0..5
    const int n_det = static_cast<int>(rng.uniform() * 6.0);  // 0..5
    std::vector<GtBox> gts;
    std::vector<DetBox> dets;
    for (int i = 0; i < n_gt; ++i)
      gts.push_back({static_cast<int>(rng.uniform() * n_img), 0,
                     random_box(rng)});
    for (int i = 0; i < n_det; ++i) {
      // quantized scores force ties; the stable tie-break must agree
      const double score = (1 + static_cast<int>(rng.uniform() * 5.0)) / 5.0;
      dets.push_back({static_cast<int>(rng.uniform() * n_img), 0, score,
                      random_box(rng)});
    }
    auto r = one_class_metrics(dets, gts);
    if (gts.empty()) {
      CHECK(!r.per_class[0].evaluated);
      continue;
    }
    double ap_sum = 0;
    for (int ti = 0; ti < 10; ++ti)
      ap_sum += naive_ap_at(dets, gts, 0.50 + 0.05 * ti);
    CHECK(r.per_class[0].ap == doctest::Approx(ap_sum / 10).epsilon(1e-12));
    CHECK(r.per_class[0].ap50 ==
          doctest::Approx(naive_ap_at(dets, gts, 0.5)).epsilon(1e-12));
  }
}

TEST_CASE("AP is monotone under helpful edits") {
  Rng rng(405);
  int grew = 0;
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<GtBox> gts;
    std::vector<DetBox> dets;
    const int n_gt = 1 + static_cast<int>(rng.uniform() * 4.0);
    const int n_det = static_cast<int>(rng.uniform() * 5.0);
    for (int i = 0; i < n_gt; ++i) gts.push_back({0, 0, random_box(rng)});
    for (int i = 0; i < n_det; ++i)
      dets.push_back({0, 0, rng.uniform(), random_box(rng)});
    const double before = one_class_metrics(dets, gts).per_class[0].ap;

    // perfect detection of some ground truth that nothing currently matches
    // at the loosest threshold (guaranteed unmatched at the tighter ones too)
    std::vector<char> gt_hit(gts.size(), 0);
    {
      std::vector<char> used(gts.size(), 0);
      std::vector<DetBox> sorted = dets;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const DetBox& a, const DetBox& b) {
                         return a.score > b.score;
                       });
      for (const auto& d : sorted) {
        int best = -1;
        double bv = 0;
        for (std::size_t j = 0; j < gts.size(); ++j) {
          if (used[j]) continue;
          const double v = iou(d.box, gts[j].box);
          if (v >= 0.5 && v > bv) {
            bv = v;
            best = static_cast<int>(j);
          }
        }
        if (best >= 0) used[best] = 1;
      }
      gt_hit.assign(used.begin(), used.end());
    }
    int free_gt = -1;
    for (std::size_t j = 0; j < gts.size(); ++j)
      if (!gt_hit[j]) free_gt = static_cast<int>(j);
    if (free_gt >= 0) {
      auto plus = dets;
      plus.push_back({0, 0, rng.uniform(), gts[free_gt].box});
      const double after = one_class_metrics(plus, gts).per_class[0].ap;
      CHECK(after >= before - 1e-12);
      if (after > before + 1e-12) ++grew;
    }

    // zero-IoU false positive ranked last: AP unchanged
    {
      auto plus = dets;
      plus.push_back({0, 0, -1.0, {900, 900, 905, 905}});
      const double after = one_class_metrics(plus, gts).per_class[0].ap;
      CHECK(after == doctest::Approx(before).epsilon(1e-12));
    }
    // ranked first: never increases
    {
      auto plus = dets;
      plus.push_back({0, 0, 2.0, {900, 900, 905, 905}});
      const double after = one_class_metrics(plus, gts).per_class[0].ap;
      CHECK(after <= before + 1e-12);
    }
  }
  CHECK(grew > 10);  // the monotonicity check must have seen real increases
}

TEST_CASE("AR@10 honours the per-image detection budget") {
  std::vector<GtBox> gts = {{0, 0, {1, 1, 9, 9}}};
  std::vector<DetBox> dets;
  // ten high-scoring junk detections crowd out the true one
  for (int i = 0; i < 10; ++i)
    dets.push_back({0, 0, 0.9, {30.0 + i, 30, 38.0 + i, 38}});
  dets.push_back({0, 0, 0.1, {1, 1, 9, 9}});
  auto r = one_class_metrics(dets, gts);
  CHECK(r.per_class[0].ar10 == 0.0);
  CHECK(r.per_class[0].ap > 0.0);  // AP itself is uncapped

  // drop one junk detection and the true hit fits the budget again
  dets.erase(dets.begin());
  auto r2 = one_class_metrics(dets, gts);
  CHECK(r2.per_class[0].ar10 == 1.0);
}

TEST_CASE("group means and mixed-group roll-up") {
  // base class 0: AP 1.0; novel class 1: AP 0 (no detections); novel class 2
  // has no ground truth and must not dilute the novel mean.
  std::vector<GtBox> gts = {{0, 0, {1, 1, 9, 9}}, {0, 1, {20, 20, 30, 30}}};
  std::vector<DetBox> dets = {{0, 0, 0.9, {1, 1, 9, 9}},
                              {0, 2, 0.4, {40, 40, 50, 50}}};
  auto r = compute_metrics(dets, gts,
                           {{0, ClassGroup::kBase},
                            {1, ClassGroup::kNovel},
                            {2, ClassGroup::kNovel}});
  CHECK(r.base.ap == 1.0);
  CHECK(r.novel.ap == 0.0);
  CHECK(r.novel.num_classes == 1);
  CHECK(r.all.ap == doctest::Approx(0.5));
  CHECK(r.all.num_detections == 2);
  CHECK(r.all.num_gt == 2);
  REQUIRE(r.per_class.size() == 3);
  CHECK(!r.per_class[2].evaluated);
  CHECK(r.per_class[2].num_detections == 1);
}

TEST_CASE("forgetting series and the flat-base checker") {
  std::vector<GtBox> gts = {{0, 0, {1, 1, 9, 9}}};
  std::vector<DetBox> dets = {{0, 0, 0.9, {1, 1, 9, 9}}};
  auto snap = compute_metrics(dets, gts, {{0, ClassGroup::kBase}});

  auto single = forgetting_series({snap});
  REQUIRE(single.size() == 1);
  CHECK(single[0].num_enrolled == 0);
  CHECK(single[0].all_ap == snap.all.ap);

  std::vector<MetricsReport> seq = {snap, snap, snap};
  CHECK(base_series_flat(seq));
  auto pts = forgetting_series(seq);
  CHECK(pts.size() == 3);
  CHECK(pts[2].num_enrolled == 2);

  // corrupt one snapshot: base AP drops, checker flags it
  seq[1].base.ap -= 0.25;
  std::string why;
  CHECK(!base_series_flat(seq, &why));
  CHECK(why.find("snapshot 1") != std::string::npos);
}

TEST_CASE("metrics report serializes with stable field layout") {
  std::vector<GtBox> gts = {{0, 0, {1, 1, 9, 9}}};
  std::vector<DetBox> dets = {{0, 0, 0.9, {1, 1, 9, 9}}};
  auto r = compute_metrics(dets, gts, {{0, ClassGroup::kBase}});
  auto j = metrics_to_json(r);
  CHECK(j["groups"]["base"]["ap"] == 1.0);
  CHECK(j["per_class"][0]["class_id"] == 0);
  auto table = format_metrics_table(r);
  CHECK(table.find("base classes") != std::string::npos);
  CHECK(table.find("1.0000") != std::string::npos);
}
