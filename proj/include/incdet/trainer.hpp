#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "incdet/checkpoint.hpp"
#include "incdet/model.hpp"
#include "incdet/synth.hpp"

namespace incdet {

struct Stage1Config {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  int early_stop_patience = 5;
};

struct Stage2Config {
  int episodes = 600;
  int tasks_per_batch = 4;
  int n_way = 3;
  int k_shot = 5;
  int query_size = 4;
  double lr = 1e-4;
};

struct TrainConfig {
  Stage1Config stage1;
  Stage2Config stage2;
  std::uint64_t seed = 7;
};

// Missing keys fall back to the defaults above; bad values throw.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& c);

struct LossParts {
  double centre = 0, size = 0, offset = 0;
  double total() const { return centre + size + offset; }
};

/// One meta-training task: n_way classes, k_shot support boxes per class,
/// query scenes whose annotations are restricted to the label set.
struct EpisodeSupportShot {
  const Scene* scene = nullptr;
  BoxAnnotation box;
};
struct EpisodeSupport {
  int class_id = 0;
  std::vector<EpisodeSupportShot> shots;  // exactly k_shot
};
struct EpisodeQuery {
  const Scene* scene = nullptr;
  std::vector<BoxAnnotation> boxes;  // label-set classes only
};
struct Episode {
  std::vector<int> label_set;
  std::vector<EpisodeSupport> support;  // aligned with label_set
  std::vector<EpisodeQuery> query;
};

// Uniform class choice without replacement; support scenes never reappear as
// queries, so support boxes are disjoint from query annotations. Pure in the
// rng state. Throws std::runtime_error when the pool cannot satisfy the
// request after bounded retries.
Episode sample_episode(const DatasetSplit& data, int n_way, int k_shot,
                       int query_size, Rng& rng);

// Centre + size loss of the episode's queries under codes generated from its
// supports. The offset path is left out: its inputs (shared codes, feature
// map) are all frozen here, so it cannot influence generator gradients.
Tensor episode_loss(const FeatureExtractor& f, const CodeGenerator& g,
                    const Episode& ep, Tape* tape,
                    LossParts* parts = nullptr);

struct Stage1Result {
  FeatureExtractor f;                 // frozen
  std::vector<ClassCode> base_codes;  // index == class id
  SharedCodes shared;                 // frozen
  double epoch0_val_loss = 0;
  double best_val_loss = 0;
  double final_train_loss = 0;
  int epochs_run = 0;
};

// Joint supervised training of the extractor, base codes and shared offset
// codes, with early stopping on the validation split (best-epoch weights are
// restored). The extractor and shared codes come back frozen. Optional CSV
// log columns: step,epoch,phase,centre,size,offset,total,wall_ms. When
// checkpoint_dir is non-empty, snapshots land there every 10 epochs plus a
// final one.
Stage1Result train_stage1(const DatasetSplit& data, const Stage1Config& cfg,
                          std::uint64_t seed, std::ostream* csv_log = nullptr,
                          const std::string& checkpoint_dir = "");

void save_stage1(const Stage1Result& r, Checkpoint& cp);
Stage1Result load_stage1(const Checkpoint& cp);

struct Stage2Result {
  int steps_run = 0;
  double val_loss_init = 0;   // fixed validation episodes, before training
  double val_loss_final = 0;  // same episodes, after
};

// Episodic meta-training of the generator; f must already be frozen. Only
// g's parameters receive updates — a weight checksum audit of f runs before
// and after. CSV columns as in stage 1.
Stage2Result meta_train_stage2(const FeatureExtractor& f, CodeGenerator& g,
                               const DatasetSplit& data,
                               const Stage2Config& cfg, std::uint64_t seed,
                               std::ostream* csv_log = nullptr);

}  // namespace incdet
