#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "incdet/registry.hpp"
#include "incdet/trainer.hpp"

using namespace incdet;

namespace {

struct Fixture {
  DatasetSplit data;
  FeatureExtractor f;
  CodeGenerator g;
  Registry base;

  static Fixture make() {
    Fixture fx;
    SplitCounts counts;
    counts.base_train = 12;
    counts.base_val = 4;
    counts.support_pool = 18;
    counts.novel_test = 8;
    fx.data = make_split(default_roster(), 6, 3, counts, 77);
    Rng rng(19);
    fx.f = FeatureExtractor::init(rng);
    fx.f.freeze();
    fx.g = CodeGenerator::init_from(fx.f.encoder, rng);
    std::vector<ClassCode> codes;
    for (int k = 0; k < 6; ++k) codes.push_back(ClassCode::init(rng));
    SharedCodes shared = SharedCodes::init(rng);
    fx.base = make_base_registry(codes, shared,
                                 {"circle", "square", "triangle", "cross",
                                  "ring", "diamond"});
    return fx;
  }
};

bool same_detections(const std::vector<Detection>& a,
                     const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].class_id != b[i].class_id || a[i].score != b[i].score ||
        a[i].x1 != b[i].x1 || a[i].y1 != b[i].y1 || a[i].x2 != b[i].x2 ||
        a[i].y2 != b[i].y2)
      return false;
  }
  return true;
}

std::vector<Detection> of_class(const std::vector<Detection>& in, int cid) {
  std::vector<Detection> out;
  for (const auto& d : in)
    if (d.class_id == cid) out.push_back(d);
  return out;
}

}  // namespace

TEST_CASE("base registry construction") {
  auto fx = Fixture::make();
  CHECK(fx.base.entries.size() == 6);
  CHECK(fx.base.entries.at(0).provenance == Provenance::kBase);
  CHECK(fx.base.entries.at(4).name == "ring");
  CHECK(fx.base.entries.at(3).class_id == 3);
}

TEST_CASE("enrol: guards, immutability, byte-stable neighbours") {
  auto fx = Fixture::make();
  Registry reg = fx.base;

  SupportSet sup6 = support_from_pool(fx.data, 6, 3);
  SupportSet sup7 = support_from_pool(fx.data, 7, 3);

  const auto before6 = registry_to_json(reg).dump();
  enrol(reg, 6, sup6, fx.g, false, "star");
  CHECK(reg.entries.size() == 7);
  CHECK(reg.entries.at(6).provenance == Provenance::kEnrolled);

  // every pre-existing code byte-identical after the enrolment
  auto j_before = nlohmann::ordered_json::parse(before6);
  auto j_after = registry_to_json(reg);
  for (int k = 0; k < 6; ++k)
    CHECK(j_before["classes"][k] == j_after["classes"][k]);

  CHECK_THROWS_AS(enrol(reg, 6, sup6, fx.g), std::invalid_argument);
  CHECK_THROWS_AS(enrol(reg, 2, sup7, fx.g, true), std::invalid_argument);

  // replacement of an enrolled class is allowed and changes only that entry
  enrol(reg, 6, sup7, fx.g, true, "star-v2");
  CHECK(reg.entries.at(6).name == "star-v2");

  SupportSet empty;
  empty.class_id = 8;
  CHECK_THROWS_AS(enrol(reg, 8, empty, fx.g), std::invalid_argument);
}

TEST_CASE("detect: single-class registry and argument guards") {
  auto fx = Fixture::make();
  Registry one;
  one.shared = fx.base.shared;
  one.entries[4] = fx.base.entries.at(4);

  const Tensor& img = fx.data.novel_test[0].image;
  auto dets = detect(fx.f, img, one, 0.05, 10);
  for (const auto& d : dets) CHECK(d.class_id == 4);
  CHECK(dets.size() <= 10);

  Registry none;
  none.shared = fx.base.shared;
  CHECK_THROWS_AS(detect(fx.f, img, none, 0.05, 10), std::invalid_argument);
}

TEST_CASE("class independence: byte-identical per-class detections") {
  auto fx = Fixture::make();
  const Tensor& img = fx.data.novel_test[1].image;

  auto full = detect(fx.f, img, fx.base, 0.01, 25);

  // drop half the registry: class 2's detections must not move
  Registry subset;
  subset.shared = fx.base.shared;
  subset.entries[2] = fx.base.entries.at(2);
  subset.entries[5] = fx.base.entries.at(5);
  auto part = detect(fx.f, img, subset, 0.01, 25);
  CHECK(same_detections(of_class(full, 2), of_class(part, 2)));
  CHECK(same_detections(of_class(full, 5), of_class(part, 5)));

  // add an enrolled class: existing classes' detections still identical
  Registry grown = fx.base;
  enrol(grown, 7, support_from_pool(fx.data, 7, 2), fx.g, false, "hexagon");
  auto with7 = detect(fx.f, img, grown, 0.01, 25);
  for (int cid = 0; cid < 6; ++cid)
    CHECK(same_detections(of_class(full, cid), of_class(with7, cid)));
}

TEST_CASE("registry JSON: round trip is exact, order is canonical") {
  auto fx = Fixture::make();
  Registry a = fx.base;
  Registry b = fx.base;
  SupportSet sup6 = support_from_pool(fx.data, 6, 3);
  SupportSet sup8 = support_from_pool(fx.data, 8, 3);

  enrol(a, 6, sup6, fx.g, false, "star");
  enrol(a, 8, sup8, fx.g, false, "crescent");
  enrol(b, 8, sup8, fx.g, false, "crescent");
  enrol(b, 6, sup6, fx.g, false, "star");
  CHECK(registry_to_json(a).dump() == registry_to_json(b).dump());

  Registry back = registry_from_json(registry_to_json(a));
  CHECK(back.entries.size() == a.entries.size());
  for (const auto& [cid, e] : a.entries) {
    CHECK(back.entries.at(cid).code.centre.data_vec() == e.code.centre.data_vec());
    CHECK(back.entries.at(cid).code.width.data_vec() == e.code.width.data_vec());
    CHECK(back.entries.at(cid).code.height.data_vec() == e.code.height.data_vec());
    CHECK(back.entries.at(cid).provenance == e.provenance);
  }
  CHECK(back.shared.offset_x.data_vec() == a.shared.offset_x.data_vec());
}

TEST_CASE("registry file persistence and write-ahead enrolment") {
  auto fx = Fixture::make();
  const std::string path = "registry_test_tmp.json";

  registry_save(fx.base, path);
  Registry loaded = registry_load(path);
  CHECK(registry_to_json(loaded).dump() == registry_to_json(fx.base).dump());

  // write-ahead: the file already holds the new entry when enrol returns
  Registry reg = fx.base;
  enrol(reg, 6, support_from_pool(fx.data, 6, 2), fx.g, false, "star", path);
  Registry on_disk = registry_load(path);
  CHECK(registry_to_json(on_disk).dump() == registry_to_json(reg).dump());
  std::remove(path.c_str());

  CHECK_THROWS_AS(registry_load("does_not_exist.json"), std::runtime_error);
}

TEST_CASE("protocols: snapshot counts, flat base, batch == continual end state") {
  auto fx = Fixture::make();
  std::vector<SupportSet> supports = {support_from_pool(fx.data, 6, 2),
                                      support_from_pool(fx.data, 7, 2),
                                      support_from_pool(fx.data, 8, 2)};
  std::vector<Scene> eval_set(fx.data.novel_test.begin(),
                              fx.data.novel_test.begin() + 6);
  EvalParams params;
  params.score_threshold = 0.05;
  params.max_per_class = 6;

  ProtocolReport cont = run_protocol(ProtocolMode::kContinual, fx.f, fx.g,
                                     fx.base, supports, eval_set, params);
  REQUIRE(cont.snapshots.size() == 4);  // base-only + one per class
  std::string why;
  CHECK(base_series_flat(cont.snapshots, &why));

  ProtocolReport batch = run_protocol(ProtocolMode::kIncrementalBatch, fx.f,
                                      fx.g, fx.base, supports, eval_set, params);
  REQUIRE(batch.snapshots.size() == 1);

  CHECK(registry_to_json(batch.final_registry).dump() ==
        registry_to_json(cont.final_registry).dump());
  CHECK(metrics_to_json(batch.snapshots.back()).dump() ==
        metrics_to_json(cont.snapshots.back()).dump());

  // novel ground truth enters the count only once its class is registered
  CHECK(cont.snapshots.front().novel.num_gt == 0);
  CHECK(cont.snapshots.back().novel.num_gt >= cont.snapshots.front().novel.num_gt);

  auto j = protocol_to_json(cont);
  CHECK(j["mode"] == "continual");
  CHECK(j["curve"].size() == 4);
  CHECK(j["curve"][0]["num_enrolled"] == 0);
}
