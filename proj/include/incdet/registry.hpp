#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "incdet/metrics.hpp"
#include "incdet/model.hpp"
#include "incdet/synth.hpp"

namespace incdet {

enum class Provenance { kBase, kEnrolled };

struct RegistryEntry {
  int class_id = 0;
  std::string name;  // optional human label
  Provenance provenance = Provenance::kEnrolled;
  ClassCode code;
  // Recorded for operators, deliberately excluded from the serialized form so
  // that registries built in any enrolment order are byte-identical on disk.
  std::string enrolment_timestamp;
};

/// Deployed detector state: per-class locator codes plus the class-agnostic
/// offset codes. The networks themselves live in checkpoints, not here.
struct Registry {
  std::map<int, RegistryEntry> entries;  // keyed (and serialized) by class_id
  SharedCodes shared;
};

Registry make_base_registry(const std::vector<ClassCode>& base_codes,
                            const SharedCodes& shared,
                            const std::vector<std::string>& names = {});

// Feed-forward enrolment: one generator pass over the support crops, one new
// entry. Nothing that already exists is touched — cost depends only on the
// support size. Throws on duplicate class_id unless `replace` is set; base
// entries never allow replacement. When persist_path is non-empty the
// updated registry is written there before the in-memory commit, so a crash
// cannot leave disk behind memory.
void enrol(Registry& reg, int class_id, const SupportSet& support,
           const CodeGenerator& g, bool replace = false,
           const std::string& name = "", const std::string& persist_path = "",
           const std::string& timestamp = "");

// Support drawn from the split's pool, packaged for enrolment.
SupportSet support_from_pool(const DatasetSplit& split, int class_id,
                             int k_shot, int resample = 0);

// Runs the extractor once, then every registered class independently:
// locate -> peak finding -> box decoding. Per-class results are concatenated
// in class-id order. No cross-class interaction of any kind.
std::vector<Detection> detect(const FeatureExtractor& f, const Tensor& image,
                              const Registry& reg, double score_threshold,
                              int max_per_class);

// Canonical serialization: entries ascending by class_id, doubles in
// shortest round-trip form, no timestamps. Equal registries give equal bytes.
nlohmann::ordered_json registry_to_json(const Registry& reg);
Registry registry_from_json(const nlohmann::json& j);
void registry_save(const Registry& reg, const std::string& path);
Registry registry_load(const std::string& path);

enum class ProtocolMode { kIncrementalBatch, kContinual };

struct EvalParams {
  double score_threshold = 0.05;
  int max_per_class = 10;
};

// Raw detections plus the in-scope ground truth over a scene set (image ids
// are scene indices). Ground truth of unregistered classes is dropped — it is
// out of scope for the current detector.
void collect_detections(const FeatureExtractor& f, const Registry& reg,
                        const std::vector<Scene>& eval_set,
                        const EvalParams& params, std::vector<DetBox>* dets,
                        std::vector<GtBox>* gts);

// collect_detections + compute_metrics, grouped by entry provenance.
MetricsReport evaluate_registry(const FeatureExtractor& f, const Registry& reg,
                                const std::vector<Scene>& eval_set,
                                const EvalParams& params);

struct ProtocolReport {
  ProtocolMode mode = ProtocolMode::kIncrementalBatch;
  // continual: base-only snapshot plus one per enrolment (N+1 total);
  // incremental_batch: the single post-enrolment snapshot.
  std::vector<MetricsReport> snapshots;
  Registry final_registry;
};

// Enrols `novel_supports` into a copy of `base` per the chosen protocol and
// evaluates with `detect`. The caller's registry is never modified.
ProtocolReport run_protocol(ProtocolMode mode, const FeatureExtractor& f,
                            const CodeGenerator& g, const Registry& base,
                            const std::vector<SupportSet>& novel_supports,
                            const std::vector<Scene>& eval_set,
                            const EvalParams& params);

nlohmann::ordered_json protocol_to_json(const ProtocolReport& report);

}  // namespace incdet
