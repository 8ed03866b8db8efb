#include "incdet/registry.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace incdet {
namespace {

Tensor code_from_json(const nlohmann::json& arr) {
  std::vector<Scalar> v;
  for (const auto& x : arr) v.push_back(x.get<Scalar>());
  if (static_cast<int>(v.size()) != kFeatureChannels)
    throw std::invalid_argument("registry: code length mismatch");
  return Tensor::from({kFeatureChannels}, std::move(v));
}

nlohmann::ordered_json code_to_json(const Tensor& t) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < t.numel(); ++i) arr.push_back(t.data()[i]);
  return arr;
}

// [N=1,C,H,W] slice -> standalone [C,H,W]
Tensor unbatch(const Tensor& t) {
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Tensor out = Tensor::zeros({c, h, w});
  std::copy_n(t.data(), out.numel(), out.data());
  return out;
}

}  // namespace

Registry make_base_registry(const std::vector<ClassCode>& base_codes,
                            const SharedCodes& shared,
                            const std::vector<std::string>& names) {
  Registry reg;
  reg.shared = shared;
  for (std::size_t k = 0; k < base_codes.size(); ++k) {
    RegistryEntry e;
    e.class_id = static_cast<int>(k);
    e.name = k < names.size() ? names[k] : "";
    e.provenance = Provenance::kBase;
    e.code = base_codes[k];
    reg.entries[e.class_id] = std::move(e);
  }
  return reg;
}

void enrol(Registry& reg, int class_id, const SupportSet& support,
           const CodeGenerator& g, bool replace, const std::string& name,
           const std::string& persist_path, const std::string& timestamp) {
  auto existing = reg.entries.find(class_id);
  if (existing != reg.entries.end()) {
    if (existing->second.provenance == Provenance::kBase)
      throw std::invalid_argument("enrol: class " + std::to_string(class_id) +
                                  " is a base class and cannot be replaced");
    if (!replace)
      throw std::invalid_argument("enrol: class " + std::to_string(class_id) +
                                  " already registered (use replace)");
  }
  RegistryEntry e;
  e.class_id = class_id;
  e.name = name;
  e.provenance = Provenance::kEnrolled;
  e.code = generate_code(g, support);
  e.enrolment_timestamp = timestamp;

  if (!persist_path.empty()) {
    Registry candidate = reg;
    candidate.entries[class_id] = e;
    registry_save(candidate, persist_path);
  }
  reg.entries[class_id] = std::move(e);
}

SupportSet support_from_pool(const DatasetSplit& split, int class_id,
                             int k_shot, int resample) {
  SupportSet sup;
  sup.class_id = class_id;
  for (const auto& s : draw_support(split, class_id, k_shot, resample))
    sup.samples.push_back({s.scene->image, s.boxes});
  return sup;
}

std::vector<Detection> detect(const FeatureExtractor& f, const Tensor& image,
                              const Registry& reg, double score_threshold,
                              int max_per_class) {
  if (reg.entries.empty())
    throw std::invalid_argument("detect: registry is empty");
  if (image.ndim() != 3)
    throw std::invalid_argument("detect: image must be [3,H,W]");
  Tensor m = f.forward(stack_images({image}));
  const int h = m.dim(2), w = m.dim(3);

  std::vector<Detection> out;
  for (const auto& [cid, entry] : reg.entries) {
    LocateOutput lo = locate(m, entry.code, reg.shared);
    Tensor heat = Tensor::zeros({h, w});
    std::copy_n(lo.centre.data(), heat.numel(), heat.data());
    const auto peaks = find_peaks(heat, score_threshold, max_per_class);
    const auto dets = decode_boxes(peaks, unbatch(lo.offset), unbatch(lo.size),
                                   kFeatureStride, cid);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

nlohmann::ordered_json registry_to_json(const Registry& reg) {
  nlohmann::ordered_json j;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& [cid, e] : reg.entries) {
    j["classes"].push_back(
        {{"class_id", cid},
         {"name", e.name},
         {"provenance", e.provenance == Provenance::kBase ? "base" : "enrolled"},
         {"codes",
          {{"centre", code_to_json(e.code.centre)},
           {"width", code_to_json(e.code.width)},
           {"height", code_to_json(e.code.height)}}}});
  }
  j["shared"] = {{"offset_x", code_to_json(reg.shared.offset_x)},
                 {"offset_y", code_to_json(reg.shared.offset_y)}};
  return j;
}

Registry registry_from_json(const nlohmann::json& j) {
  Registry reg;
  reg.shared.offset_x = code_from_json(j.at("shared").at("offset_x"));
  reg.shared.offset_y = code_from_json(j.at("shared").at("offset_y"));
  for (const auto& c : j.at("classes")) {
    RegistryEntry e;
    e.class_id = c.at("class_id").get<int>();
    e.name = c.value("name", std::string());
    const std::string prov = c.at("provenance").get<std::string>();
    if (prov != "base" && prov != "enrolled")
      throw std::invalid_argument("registry: unknown provenance " + prov);
    e.provenance = prov == "base" ? Provenance::kBase : Provenance::kEnrolled;
    e.code.centre = code_from_json(c.at("codes").at("centre"));
    e.code.width = code_from_json(c.at("codes").at("width"));
    e.code.height = code_from_json(c.at("codes").at("height"));
    if (reg.entries.count(e.class_id))
      throw std::invalid_argument("registry: duplicate class id");
    reg.entries[e.class_id] = std::move(e);
  }
  return reg;
}

void registry_save(const Registry& reg, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("registry_save: cannot open " + tmp);
    out << registry_to_json(reg).dump(2) << '\n';
    if (!out) throw std::runtime_error("registry_save: write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("registry_save: rename to " + path + " failed");
}

Registry registry_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("registry_load: cannot open " + path);
  return registry_from_json(nlohmann::json::parse(in));
}

void collect_detections(const FeatureExtractor& f, const Registry& reg,
                        const std::vector<Scene>& eval_set,
                        const EvalParams& params, std::vector<DetBox>* dets,
                        std::vector<GtBox>* gts) {
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const int img = static_cast<int>(i);
    if (dets)
      for (const auto& d :
           detect(f, eval_set[i].image, reg, params.score_threshold,
                  params.max_per_class))
        dets->push_back({img, d.class_id, d.score, {d.x1, d.y1, d.x2, d.y2}});
    if (gts)
      for (const auto& b : eval_set[i].annotations)
        if (reg.entries.count(b.class_id))  // unregistered: out of scope
          gts->push_back({img, b.class_id, {b.x1, b.y1, b.x2, b.y2}});
  }
}

MetricsReport evaluate_registry(const FeatureExtractor& f, const Registry& reg,
                                const std::vector<Scene>& eval_set,
                                const EvalParams& params) {
  std::map<int, ClassGroup> groups;
  for (const auto& [cid, e] : reg.entries)
    groups[cid] = e.provenance == Provenance::kBase ? ClassGroup::kBase
                                                    : ClassGroup::kNovel;
  std::vector<DetBox> dets;
  std::vector<GtBox> gts;
  collect_detections(f, reg, eval_set, params, &dets, &gts);
  return compute_metrics(dets, gts, groups);
}

ProtocolReport run_protocol(ProtocolMode mode, const FeatureExtractor& f,
                            const CodeGenerator& g, const Registry& base,
                            const std::vector<SupportSet>& novel_supports,
                            const std::vector<Scene>& eval_set,
                            const EvalParams& params) {
  ProtocolReport report;
  report.mode = mode;
  Registry reg = base;
  if (mode == ProtocolMode::kContinual)
    report.snapshots.push_back(evaluate_registry(f, reg, eval_set, params));
  for (const auto& sup : novel_supports) {
    enrol(reg, sup.class_id, sup, g);
    if (mode == ProtocolMode::kContinual)
      report.snapshots.push_back(evaluate_registry(f, reg, eval_set, params));
  }
  if (mode == ProtocolMode::kIncrementalBatch)
    report.snapshots.push_back(evaluate_registry(f, reg, eval_set, params));
  report.final_registry = std::move(reg);
  return report;
}

nlohmann::ordered_json protocol_to_json(const ProtocolReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode == ProtocolMode::kIncrementalBatch
                  ? "incremental_batch"
                  : "continual";
  j["snapshots"] = nlohmann::ordered_json::array();
  for (const auto& s : report.snapshots) j["snapshots"].push_back(metrics_to_json(s));
  j["curve"] = nlohmann::ordered_json::array();
  for (const auto& p : forgetting_series(report.snapshots))
    j["curve"].push_back({{"num_enrolled", p.num_enrolled},
                          {"all_ap", p.all_ap},
                          {"all_ar10", p.all_ar10},
                          {"base_ap", p.base_ap}});
  j["registry"] = registry_to_json(report.final_registry);
  return j;
}

}  // namespace incdet
