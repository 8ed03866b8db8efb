// Command-line front end: train, meta-train, enrol, evaluate, detect and
// dataset export, with every run pinned down by a manifest written before any
// other artifact.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "incdet/checkpoint.hpp"
#include "incdet/metrics.hpp"
#include "incdet/model.hpp"
#include "incdet/png_io.hpp"
#include "incdet/registry.hpp"
#include "incdet/rng.hpp"
#include "incdet/svg_plot.hpp"
#include "incdet/synth.hpp"
#include "incdet/trainer.hpp"

#ifndef INCDET_BUILD_ID
#define INCDET_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace incdet;

namespace {

// exit code 1; anything else escaping a command exits 2
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return fnv1a(bytes.data(), bytes.size());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Refuses to reuse a non-empty directory unless --force, then creates it.
fs::path prepare_run_dir(const std::string& out, bool force) {
  const fs::path dir(out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir))
      throw UsageError("output path exists and is not a directory: " + out);
    if (!fs::is_empty(dir) && !force)
      throw UsageError("output directory not empty (use --force): " + out);
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

struct AppConfig {
  TrainConfig train;  // seed + stage1 + stage2
  int n_base = 6, n_novel = 3;
  SplitCounts counts;
  EvalParams eval;
};

AppConfig app_config_from_json(const json& j) {
  AppConfig c;
  c.train = train_config_from_json(j);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("n_base")) c.n_base = d.at("n_base");
    if (d.contains("n_novel")) c.n_novel = d.at("n_novel");
    if (d.contains("train_scenes")) c.counts.base_train = d.at("train_scenes");
    if (d.contains("val_scenes")) c.counts.base_val = d.at("val_scenes");
    if (d.contains("support_scenes"))
      c.counts.support_pool = d.at("support_scenes");
    if (d.contains("test_scenes")) c.counts.novel_test = d.at("test_scenes");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("score_threshold"))
      c.eval.score_threshold = e.at("score_threshold");
    if (e.contains("max_per_class")) c.eval.max_per_class = e.at("max_per_class");
  }
  const int roster = static_cast<int>(default_roster().size());
  if (c.n_base < 1 || c.n_novel < 1 || c.n_base + c.n_novel > roster)
    throw std::invalid_argument("config: class counts exceed the roster");
  if (c.counts.base_train < 1 || c.counts.base_val < 1 ||
      c.counts.support_pool < c.n_novel || c.counts.novel_test < 1)
    throw std::invalid_argument("config: bad scene counts");
  if (c.eval.score_threshold < 0 || c.eval.score_threshold >= 1 ||
      c.eval.max_per_class < 1)
    throw std::invalid_argument("config: bad eval params");
  return c;
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file not found: " + path);
  try {
    return app_config_from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw UsageError("bad config " + path + ": " + e.what());
  }
}

ordered_json manifest_stub(const std::string& command,
                           const std::string& config_path,
                           std::uint64_t seed, const fs::path& run_dir) {
  ordered_json m;
  m["command"] = command;
  m["build"] = INCDET_BUILD_ID;
  m["started_at"] = now_iso8601();
  m["seed"] = seed;
  m["config"] = config_path.empty() ? "(builtin defaults)" : config_path;
  if (!config_path.empty())
    m["config_checksum"] = hex64(file_checksum(config_path));
  m["output_dir"] = fs::absolute(run_dir).string();
  m["inputs"] = ordered_json::object();
  m["outputs"] = ordered_json::array();
  return m;
}

void add_input(ordered_json& manifest, const std::string& name,
               const std::string& path) {
  manifest["inputs"][name] = {{"path", fs::absolute(path).string()},
                              {"checksum", hex64(file_checksum(path))}};
}

DatasetSplit build_split(const AppConfig& cfg) {
  return make_split(default_roster(), cfg.n_base, cfg.n_novel, cfg.counts,
                    cfg.train.seed);
}

std::vector<std::string> base_names(const AppConfig& cfg) {
  const auto roster = default_roster();
  std::vector<std::string> names;
  for (int i = 0; i < cfg.n_base; ++i) names.push_back(roster[i].shape);
  return names;
}

std::uint64_t code_checksum(const ClassCode& code) {
  Checkpoint cp;
  cp.put("centre", code.centre);
  cp.put("width", code.width);
  cp.put("height", code.height);
  return cp.checksum();
}

std::uint64_t extractor_checksum(const FeatureExtractor& f) {
  Checkpoint cp;
  f.save_into(cp, "extractor");
  return cp.checksum();
}

// ---------------------------------------------------------------- commands

struct TrainBaseOpts {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void cmd_train_base(const TrainBaseOpts& o) {
  AppConfig cfg = load_app_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  const fs::path run = prepare_run_dir(o.out, o.force);

  ordered_json man = manifest_stub("train-base", o.config, cfg.train.seed, run);
  man["outputs"] = {"stage1.ckpt", "registry.json", "train_log.csv",
                    "summary.json"};
  write_json(run / "manifest.json", man);

  std::printf("building synthetic split (seed %llu)...\n",
              static_cast<unsigned long long>(cfg.train.seed));
  DatasetSplit data = build_split(cfg);
  std::ofstream csv(run / "train_log.csv");

  const auto t0 = std::chrono::steady_clock::now();
  Stage1Result r = train_stage1(data, cfg.train.stage1, cfg.train.seed, &csv,
                                run.string());
  const double wall = seconds_since(t0);

  Checkpoint cp;
  save_stage1(r, cp);
  cp.save((run / "stage1.ckpt").string());
  Registry reg = make_base_registry(r.base_codes, r.shared, base_names(cfg));
  registry_save(reg, (run / "registry.json").string());

  ordered_json summary = {
      {"epochs_run", r.epochs_run},
      {"epoch0_val_loss", r.epoch0_val_loss},
      {"best_val_loss", r.best_val_loss},
      {"final_train_loss", r.final_train_loss},
      {"wall_seconds", wall},
      {"stage1_checksum", hex64(cp.checksum())},
      {"registry_checksum",
       hex64(file_checksum((run / "registry.json").string()))}};
  write_json(run / "summary.json", summary);

  std::printf(
      "stage 1 done: %d epochs in %.1fs, val loss %.4f -> %.4f\n"
      "stage1.ckpt checksum %s\n",
      r.epochs_run, wall, r.epoch0_val_loss, r.best_val_loss,
      hex64(cp.checksum()).c_str());
}

struct MetaTrainOpts {
  std::string config, stage1, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void cmd_meta_train(const MetaTrainOpts& o) {
  AppConfig cfg = load_app_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  Stage1Result s1 = load_stage1(Checkpoint::load(o.stage1));
  const fs::path run = prepare_run_dir(o.out, o.force);

  ordered_json man = manifest_stub("meta-train", o.config, cfg.train.seed, run);
  add_input(man, "stage1", o.stage1);
  man["outputs"] = {"generator.ckpt", "episode_log.csv", "summary.json"};
  write_json(run / "manifest.json", man);

  DatasetSplit data = build_split(cfg);
  Rng init_rng = Rng(cfg.train.seed).fork(0x6E67);  // generator head init
  CodeGenerator g = CodeGenerator::init_from(s1.f.encoder, init_rng);

  const std::uint64_t f_before = extractor_checksum(s1.f);
  std::ofstream csv(run / "episode_log.csv");
  const auto t0 = std::chrono::steady_clock::now();
  Stage2Result r =
      meta_train_stage2(s1.f, g, data, cfg.train.stage2, cfg.train.seed, &csv);
  const double wall = seconds_since(t0);
  const std::uint64_t f_after = extractor_checksum(s1.f);
  if (f_before != f_after)
    throw std::runtime_error("extractor weights changed during meta-training");

  Checkpoint cp;
  g.save_into(cp, "generator");
  cp.save((run / "generator.ckpt").string());

  ordered_json summary = {{"steps_run", r.steps_run},
                          {"val_loss_init", r.val_loss_init},
                          {"val_loss_final", r.val_loss_final},
                          {"wall_seconds", wall},
                          {"generator_checksum", hex64(cp.checksum())},
                          {"extractor_checksum", hex64(f_after)}};
  write_json(run / "summary.json", summary);

  std::printf(
      "stage 2 done: %d steps in %.1fs, episode val loss %.4f -> %.4f\n"
      "extractor checksum %s unchanged\n"
      "generator.ckpt checksum %s\n",
      r.steps_run, wall, r.val_loss_init, r.val_loss_final,
      hex64(f_after).c_str(), hex64(cp.checksum()).c_str());
}

struct EnrolOpts {
  std::string config, registry, generator, out, name, support_dir;
  std::vector<int> synthetic;  // class_id, k_shot
  int class_id = -1;           // support-dir mode
  int resample = 0;
  bool replace = false, force = false;
};

SupportSet support_from_dir(const std::string& dir, int class_id) {
  SupportSet support;
  support.class_id = class_id;
  std::vector<fs::path> anns;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") anns.push_back(entry.path());
  std::sort(anns.begin(), anns.end());
  for (const auto& ann_path : anns) {
    std::ifstream in(ann_path);
    json boxes = json::parse(in);
    fs::path img_path = ann_path;
    img_path.replace_extension(".png");
    SupportSet::Sample sample;
    for (const auto& b : boxes) {
      if (b.at("class_id").get<int>() != class_id) continue;
      const auto& bb = b.at("bbox");
      BoxAnnotation box;
      box.class_id = class_id;
      box.x1 = bb.at(0);
      box.y1 = bb.at(1);
      box.x2 = bb.at(2);
      box.y2 = bb.at(3);
      sample.boxes.push_back(box);
    }
    if (sample.boxes.empty()) continue;
    sample.image = read_png(img_path.string());
    support.samples.push_back(std::move(sample));
  }
  if (support.samples.empty())
    throw UsageError("no annotations for class " + std::to_string(class_id) +
                     " under " + dir);
  return support;
}

void cmd_enrol(const EnrolOpts& o) {
  if (o.synthetic.empty() == o.support_dir.empty())
    throw UsageError("pass exactly one of --synthetic or --support-dir");
  AppConfig cfg = load_app_config(o.config);
  Registry reg = registry_load(o.registry);
  CodeGenerator g =
      CodeGenerator::load_from(Checkpoint::load(o.generator), "generator");
  const fs::path run = prepare_run_dir(o.out, o.force);

  ordered_json man = manifest_stub("enrol", o.config, cfg.train.seed, run);
  add_input(man, "registry", o.registry);
  add_input(man, "generator", o.generator);
  man["outputs"] = {"registry.json", "summary.json"};

  SupportSet support;
  int class_id = 0;
  if (!o.synthetic.empty()) {
    class_id = o.synthetic[0];
    const int k = o.synthetic[1];
    man["support"] = {{"source", "synthetic"},
                      {"class_id", class_id},
                      {"k_shot", k},
                      {"resample", o.resample}};
    DatasetSplit data = build_split(cfg);
    support = support_from_pool(data, class_id, k, o.resample);
  } else {
    if (o.class_id < 0)
      throw UsageError("--support-dir requires --class-id");
    class_id = o.class_id;
    man["support"] = {{"source", fs::absolute(o.support_dir).string()},
                      {"class_id", class_id}};
    support = support_from_dir(o.support_dir, class_id);
  }
  write_json(run / "manifest.json", man);

  int num_boxes = 0;
  for (const auto& s : support.samples)
    num_boxes += static_cast<int>(s.boxes.size());
  std::string name = o.name;
  if (name.empty()) {
    const auto roster = default_roster();
    for (const auto& sc : roster)
      if (sc.id == class_id) name = sc.shape;
  }

  const auto t0 = std::chrono::steady_clock::now();
  enrol(reg, class_id, support, g, o.replace, name,
        (run / "registry.json").string(), now_iso8601());
  const double wall_ms = seconds_since(t0) * 1e3;

  const std::uint64_t checksum = code_checksum(reg.entries.at(class_id).code);
  ordered_json summary = {{"class_id", class_id},
                          {"name", name},
                          {"support_boxes", num_boxes},
                          {"wall_ms", wall_ms},
                          {"code_checksum", hex64(checksum)},
                          {"registry_entries", reg.entries.size()}};
  write_json(run / "summary.json", summary);

  std::printf("enrolled class %d (%s) from %d boxes in %.1f ms\n"
              "code checksum %s\n",
              class_id, name.c_str(), num_boxes, wall_ms,
              hex64(checksum).c_str());
}

struct EvalOpts {
  std::string config, stage1, generator, registry, out, protocol = "batch";
  std::vector<int> shots;
  int resample = 0;
  bool plots = false, force = false;
};

PlotSpec forgetting_plot(const std::vector<ForgettingPoint>& curve, int k) {
  PlotSpec spec;
  spec.title = "AP while enrolling (" + std::to_string(k) + "-shot)";
  spec.x_label = "novel classes enrolled";
  spec.y_label = "AP";
  PlotSeries base{"base", {}, {}}, all{"all", {}, {}};
  for (const auto& p : curve) {
    base.x.push_back(p.num_enrolled);
    base.y.push_back(p.base_ap);
    all.x.push_back(p.num_enrolled);
    all.y.push_back(p.all_ap);
  }
  spec.series = {base, all};
  spec.y_lo = 0;
  spec.y_hi = 1;
  return spec;
}

PlotSpec pr_plot(const std::vector<DetBox>& dets, const std::vector<GtBox>& gts,
                 const Registry& reg, int k) {
  PlotSpec spec;
  spec.title = "PR at IoU 0.5 (" + std::to_string(k) + "-shot)";
  spec.x_label = "recall";
  spec.y_label = "precision";
  spec.y_lo = 0;
  spec.y_hi = 1;
  for (const auto& [cid, entry] : reg.entries) {
    PrCurve c = pr_curve(dets, gts, cid, 0.5);
    if (c.recall.empty()) continue;
    std::string label = entry.name.empty() ? std::to_string(cid) : entry.name;
    spec.series.push_back({label, c.recall, c.precision});
  }
  return spec;
}

void cmd_eval(const EvalOpts& o) {
  AppConfig cfg = load_app_config(o.config);
  if (o.protocol != "batch" && o.protocol != "continual")
    throw UsageError("--protocol must be batch or continual");
  const ProtocolMode mode = o.protocol == "batch"
                                ? ProtocolMode::kIncrementalBatch
                                : ProtocolMode::kContinual;
  std::vector<int> shots = o.shots.empty() ? std::vector<int>{5} : o.shots;

  Stage1Result s1 = load_stage1(Checkpoint::load(o.stage1));
  CodeGenerator g =
      CodeGenerator::load_from(Checkpoint::load(o.generator), "generator");
  Registry base = o.registry.empty()
                      ? make_base_registry(s1.base_codes, s1.shared,
                                           base_names(cfg))
                      : registry_load(o.registry);

  const fs::path run = prepare_run_dir(o.out, o.force);
  ordered_json man = manifest_stub("eval", o.config, cfg.train.seed, run);
  add_input(man, "stage1", o.stage1);
  add_input(man, "generator", o.generator);
  if (!o.registry.empty()) add_input(man, "registry", o.registry);
  man["protocol"] = o.protocol;
  man["shots"] = shots;
  man["resample"] = o.resample;
  man["outputs"] = {"report.json", "table.txt"};
  write_json(run / "manifest.json", man);

  DatasetSplit data = build_split(cfg);
  ordered_json report;
  report["protocol"] = o.protocol;
  report["shots"] = ordered_json::array();
  std::string tables;

  for (int k : shots) {
    std::vector<SupportSet> supports;
    for (int cid = cfg.n_base; cid < cfg.n_base + cfg.n_novel; ++cid)
      supports.push_back(support_from_pool(data, cid, k, o.resample));

    const auto t0 = std::chrono::steady_clock::now();
    ProtocolReport pr = run_protocol(mode, s1.f, g, base, supports,
                                     data.novel_test, cfg.eval);
    const double wall = seconds_since(t0);

    std::string hdr = "== " + o.protocol + " protocol, " + std::to_string(k) +
                      "-shot ==\n";
    std::string table = format_metrics_table(pr.snapshots.back());
    std::printf("%s%s(%.1fs)\n", hdr.c_str(), table.c_str(), wall);
    tables += hdr + table + "\n";

    ordered_json entry = {{"k_shot", k}, {"wall_seconds", wall}};
    entry["result"] = protocol_to_json(pr);
    report["shots"].push_back(entry);

    if (mode == ProtocolMode::kContinual) {
      const auto curve = forgetting_series(pr.snapshots);
      save_svg((run / ("forgetting_k" + std::to_string(k) + ".svg")).string(),
               line_chart_svg(forgetting_plot(curve, k)));
    }
    if (o.plots) {
      std::vector<DetBox> dets;
      std::vector<GtBox> gts;
      collect_detections(s1.f, pr.final_registry, data.novel_test, cfg.eval,
                         &dets, &gts);
      save_svg((run / ("pr_curves_k" + std::to_string(k) + ".svg")).string(),
               line_chart_svg(pr_plot(dets, gts, pr.final_registry, k)));
    }
  }

  write_json(run / "report.json", report);
  write_text(run / "table.txt", tables);
}

struct DetectOpts {
  std::string stage1, registry, image, out;
  double threshold = 0.05;
  int max_per_class = 10;
  bool force = false;
};

void cmd_detect(const DetectOpts& o) {
  Stage1Result s1 = load_stage1(Checkpoint::load(o.stage1));
  Registry reg = registry_load(o.registry);
  Tensor image = read_png(o.image);
  const fs::path run = prepare_run_dir(o.out, o.force);

  ordered_json man = manifest_stub("detect", "", 0, run);
  add_input(man, "stage1", o.stage1);
  add_input(man, "registry", o.registry);
  add_input(man, "image", o.image);
  man["outputs"] = {"detections.jsonl", "annotated.png"};
  write_json(run / "manifest.json", man);

  const auto dets =
      detect(s1.f, image, reg, o.threshold, o.max_per_class);

  std::string lines;
  for (const auto& d : dets) {
    ordered_json j = {{"image_id", 0},
                      {"class_id", d.class_id},
                      {"score", d.score},
                      {"bbox", {d.x1, d.y1, d.x2, d.y2}}};
    lines += j.dump() + "\n";
  }
  write_text(run / "detections.jsonl", lines);
  write_png((run / "annotated.png").string(), annotate_detections(image, dets));

  std::printf("%s", lines.c_str());
  std::printf("%zu detections -> %s\n", dets.size(),
              (run / "detections.jsonl").c_str());
}

struct SynthExportOpts {
  std::string config, out, split = "test";
  int count = 16;
  bool force = false;
};

void cmd_synth_export(const SynthExportOpts& o) {
  AppConfig cfg = load_app_config(o.config);
  if (o.count < 1) throw UsageError("--count must be positive");
  const fs::path run = prepare_run_dir(o.out, o.force);

  ordered_json man = manifest_stub("synth-export", o.config, cfg.train.seed, run);
  man["split"] = o.split;
  man["count"] = o.count;
  man["outputs"] = {"NNNN.png + NNNN.json pairs"};
  write_json(run / "manifest.json", man);

  DatasetSplit data = build_split(cfg);
  const std::vector<Scene>* scenes = nullptr;
  if (o.split == "train") scenes = &data.base_train;
  else if (o.split == "val") scenes = &data.base_val;
  else if (o.split == "support") scenes = &data.support_pool;
  else if (o.split == "test") scenes = &data.novel_test;
  else throw UsageError("--split must be train|val|support|test");
  const int n = std::min<int>(o.count, static_cast<int>(scenes->size()));

  for (int i = 0; i < n; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%04d", i);
    const Scene& sc = (*scenes)[i];
    write_png((run / (std::string(stem) + ".png")).string(), sc.image);
    ordered_json anns = ordered_json::array();
    for (const auto& b : sc.annotations)
      anns.push_back({{"image_id", i},
                      {"class_id", b.class_id},
                      {"score", 1.0},
                      {"bbox", {b.x1, b.y1, b.x2, b.y2}}});
    write_json(run / (std::string(stem) + ".json"), anns);
  }
  std::printf("wrote %d scene(s) from the %s split to %s\n", n,
              o.split.c_str(), run.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental few-shot shape detector"};
  app.require_subcommand(1);

  TrainBaseOpts tb;
  auto* train_base = app.add_subcommand(
      "train-base", "stage 1: train the feature extractor and base codes");
  train_base->add_option("--config", tb.config, "config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  train_base->add_option("--out", tb.out, "run directory")->required();
  train_base->add_option("--seed", tb.seed, "override the config seed");
  train_base->add_flag("--force", tb.force, "reuse a non-empty run directory");
  train_base->callback([&tb] { cmd_train_base(tb); });

  MetaTrainOpts mt;
  auto* meta_train = app.add_subcommand(
      "meta-train", "stage 2: meta-train the code generator");
  meta_train->add_option("--config", mt.config, "config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  meta_train->add_option("--stage1", mt.stage1, "stage1.ckpt from train-base")
      ->required()
      ->check(CLI::ExistingFile);
  meta_train->add_option("--out", mt.out, "run directory")->required();
  meta_train->add_option("--seed", mt.seed, "override the config seed");
  meta_train->add_flag("--force", mt.force, "reuse a non-empty run directory");
  meta_train->callback([&mt] { cmd_meta_train(mt); });

  EnrolOpts en;
  auto* enrol_cmd = app.add_subcommand(
      "enrol", "register a novel class from a few support boxes");
  enrol_cmd->add_option("--config", en.config, "config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  enrol_cmd->add_option("--registry", en.registry, "registry JSON to extend")
      ->required()
      ->check(CLI::ExistingFile);
  enrol_cmd
      ->add_option("--generator", en.generator, "generator.ckpt from meta-train")
      ->required()
      ->check(CLI::ExistingFile);
  enrol_cmd->add_option("--out", en.out, "run directory")->required();
  enrol_cmd->add_option("--synthetic", en.synthetic,
                        "draw supports from the synthetic pool: CLASS_ID K")
      ->expected(2);
  enrol_cmd->add_option("--support-dir", en.support_dir,
                        "directory of NAME.png + NAME.json support pairs")
      ->check(CLI::ExistingDirectory);
  enrol_cmd->add_option("--class-id", en.class_id,
                        "class id (support-dir mode)");
  enrol_cmd->add_option("--name", en.name, "human label for the class");
  enrol_cmd->add_option("--resample", en.resample,
                        "alternate support draw (synthetic mode)");
  enrol_cmd->add_flag("--replace", en.replace,
                      "allow replacing an enrolled class");
  enrol_cmd->add_flag("--force", en.force, "reuse a non-empty run directory");
  enrol_cmd->callback([&en] { cmd_enrol(en); });

  EvalOpts ev;
  auto* eval_cmd =
      app.add_subcommand("eval", "run an enrolment protocol and report metrics");
  eval_cmd->add_option("--config", ev.config, "config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--stage1", ev.stage1, "stage1.ckpt")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--generator", ev.generator, "generator.ckpt")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--registry", ev.registry,
                       "base registry (default: rebuilt from stage1)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "run directory")->required();
  eval_cmd->add_option("--protocol", ev.protocol, "batch|continual")
      ->capture_default_str();
  eval_cmd->add_option("--shots", ev.shots,
                       "shot counts to sweep (default: 5)");
  eval_cmd->add_option("--resample", ev.resample, "alternate support draw");
  eval_cmd->add_flag("--plots", ev.plots, "emit PR-curve SVGs");
  eval_cmd->add_flag("--force", ev.force, "reuse a non-empty run directory");
  eval_cmd->callback([&ev] { cmd_eval(ev); });

  DetectOpts de;
  auto* detect_cmd =
      app.add_subcommand("detect", "detect registered classes in one image");
  detect_cmd->add_option("--stage1", de.stage1, "stage1.ckpt")
      ->required()
      ->check(CLI::ExistingFile);
  detect_cmd->add_option("--registry", de.registry, "registry JSON")
      ->required()
      ->check(CLI::ExistingFile);
  detect_cmd->add_option("--image", de.image, "64x64 RGB PNG")
      ->required()
      ->check(CLI::ExistingFile);
  detect_cmd->add_option("--out", de.out, "run directory")->required();
  detect_cmd->add_option("--threshold", de.threshold, "score threshold")
      ->capture_default_str();
  detect_cmd
      ->add_option("--max-per-class", de.max_per_class, "detection cap")
      ->capture_default_str();
  detect_cmd->add_flag("--force", de.force, "reuse a non-empty run directory");
  detect_cmd->callback([&de] { cmd_detect(de); });

  SynthExportOpts se;
  auto* synth_cmd = app.add_subcommand(
      "synth-export", "write synthetic scenes as PNG + annotation JSON");
  synth_cmd->add_option("--config", se.config, "config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", se.out, "run directory")->required();
  synth_cmd->add_option("--count", se.count, "number of scenes")
      ->capture_default_str();
  synth_cmd->add_option("--split", se.split, "train|val|support|test")
      ->capture_default_str();
  synth_cmd->add_flag("--force", se.force, "reuse a non-empty run directory");
  synth_cmd->callback([&se] { cmd_synth_export(se); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
