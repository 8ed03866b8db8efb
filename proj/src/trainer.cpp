#include "incdet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>

#include "incdet/ops.hpp"
#include "incdet/optim.hpp"

namespace incdet {
namespace {

constexpr double kSizeLossWeight = 0.1;
constexpr double kOffsetLossWeight = 1.0;
// Splat cells are outnumbered ~64:1 by background, and every post-relu
// feature vector has non-negative entries, so the pooled background gradient
// drags object logits down with it and the sigmoid saturates everything to
// zero. Weighting the splat region rebalances the two pulls at init.
constexpr double kCentrePosWeight = 50.0;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Rendered targets for a batch of query/train images, stacked along N.
struct StackedTargets {
  Tensor centre;  // [B,K,Hm,Wm]
  Tensor size;    // [B,2,Hm,Wm]
  Tensor offset;  // [B,2,Hm,Wm]
  Tensor valid;   // [B,1,Hm,Wm]
  int num_boxes = 0;
};

StackedTargets stack_targets(const std::vector<std::vector<BoxAnnotation>>& per_image,
                             int num_classes) {
  const int b = static_cast<int>(per_image.size());
  const int hm = kImageSize / kFeatureStride;
  StackedTargets out;
  out.centre = Tensor::zeros({b, num_classes, hm, hm});
  out.size = Tensor::zeros({b, 2, hm, hm});
  out.offset = Tensor::zeros({b, 2, hm, hm});
  out.valid = Tensor::zeros({b, 1, hm, hm});
  const std::int64_t plane = static_cast<std::int64_t>(hm) * hm;
  for (int i = 0; i < b; ++i) {
    TargetMaps t = render_targets(per_image[i], kImageSize, kImageSize,
                                  kFeatureStride, num_classes);
    std::copy_n(t.centre.data(), num_classes * plane,
                out.centre.data() + i * num_classes * plane);
    std::copy_n(t.size.data(), 2 * plane, out.size.data() + i * 2 * plane);
    std::copy_n(t.offset.data(), 2 * plane, out.offset.data() + i * 2 * plane);
    std::copy_n(t.valid_mask.data(), plane, out.valid.data() + i * plane);
    out.num_boxes += static_cast<int>(per_image[i].size());
  }
  return out;
}

// [B,K,H,W] -> [B,1,H,W] copy of class k (targets carry no gradients).
Tensor slice_class(const Tensor& t, int k) {
  const int b = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Tensor out = Tensor::zeros({b, 1, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < b; ++i)
    std::copy_n(t.data() + (static_cast<std::int64_t>(i) * c + k) * plane,
                plane, out.data() + i * plane);
  return out;
}

// Cells owned by a class: the splat is exactly 1.0 only at annotated cells.
Tensor cells_of(const Tensor& centre_k) {
  Tensor m = Tensor::zeros(centre_k.shape());
  for (std::int64_t i = 0; i < m.numel(); ++i)
    m.data()[i] = centre_k.data()[i] == 1.0 ? 1.0 : 0.0;
  return m;
}

// Per-cell L1 weights for a centre map: background 1, splat kCentrePosWeight.
Tensor centre_weights(const Tensor& centre_k) {
  Tensor m = Tensor::full(centre_k.shape(), 1.0);
  for (std::int64_t i = 0; i < m.numel(); ++i)
    if (centre_k.data()[i] > 0.0) m.data()[i] = kCentrePosWeight;
  return m;
}

// Shared loss core: class-balanced L1 over every cell of every class centre
// map (splat cells weighted by kCentrePosWeight), masked L1 on size
// (per-class cells) and optionally offset (all valid cells). All three terms
// are sums normalized by the object count, never by the cell count — a
// per-cell mean makes the sparse peaks contribute ~1/256 of the gradient the
// dense terms get, and the heatmap head then collapses to a flat low output.
Tensor detection_loss(const Tensor& m, const std::vector<const ClassCode*>& codes,
                      const SharedCodes& shared, const StackedTargets& tg,
                      bool with_offset, Tape* tape, LossParts* parts) {
  const int k = static_cast<int>(codes.size());
  const double obj_norm = 1.0 / std::max(1, tg.num_boxes);
  const double box_norm = 1.0 / std::max(1, 2 * tg.num_boxes);
  Tensor centre_sum, size_sum, offset_pred;
  for (int i = 0; i < k; ++i) {
    LocateOutput pred = locate(m, *codes[i], shared, tape);
    if (i == 0) offset_pred = pred.offset;
    Tensor centre_t = slice_class(tg.centre, i);
    Tensor li = masked_l1_sum(pred.centre, centre_t, centre_weights(centre_t), tape);
    centre_sum = centre_sum.defined() ? add(centre_sum, li, tape) : li;
    Tensor si = masked_l1_sum(pred.size, tg.size, cells_of(centre_t), tape);
    size_sum = size_sum.defined() ? add(size_sum, si, tape) : si;
  }
  Tensor loss = add(mul_scalar(centre_sum, obj_norm, tape),
                    mul_scalar(size_sum, kSizeLossWeight * box_norm, tape), tape);
  if (parts) {
    parts->centre = centre_sum.value() * obj_norm;
    parts->size = size_sum.value() * kSizeLossWeight * box_norm;
    parts->offset = 0;
  }
  if (with_offset) {
    Tensor oi = mul_scalar(masked_l1_sum(offset_pred, tg.offset, tg.valid, tape),
                           kOffsetLossWeight * box_norm, tape);
    if (parts) parts->offset = oi.value();
    loss = add(loss, oi, tape);
  }
  INCDET_CHECK(std::isfinite(loss.value()), "detection loss is not finite");
  return loss;
}

Tensor stack_scene_images(const std::vector<const Scene*>& scenes) {
  std::vector<Tensor> imgs;
  for (const Scene* s : scenes) imgs.push_back(s->image);
  return stack_images(imgs);
}

void write_csv_row(std::ostream* csv, int step, int epoch, const char* phase,
                   const LossParts& p, double wall_ms) {
  if (!csv) return;
  (*csv) << step << ',' << epoch << ',' << phase << ',' << p.centre << ','
         << p.size << ',' << p.offset << ',' << p.total() << ',' << wall_ms
         << '\n';
}

std::vector<std::vector<Scalar>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<Scalar>> out;
  for (const auto& p : params) out.push_back(p.data_vec());
  return out;
}

void restore(const std::vector<Tensor>& params,
             const std::vector<std::vector<Scalar>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].impl()->data = snap[i];
}

std::uint64_t weight_digest(const std::vector<Tensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.data());
    for (std::size_t i = 0; i < p.data_vec().size() * sizeof(Scalar); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("stage1")) {
    const auto& s = j.at("stage1");
    if (s.contains("epochs")) c.stage1.epochs = s.at("epochs");
    if (s.contains("batch_size")) c.stage1.batch_size = s.at("batch_size");
    if (s.contains("lr")) c.stage1.lr = s.at("lr");
    if (s.contains("early_stop_patience"))
      c.stage1.early_stop_patience = s.at("early_stop_patience");
  }
  if (j.contains("stage2")) {
    const auto& s = j.at("stage2");
    if (s.contains("episodes")) c.stage2.episodes = s.at("episodes");
    if (s.contains("tasks_per_batch")) c.stage2.tasks_per_batch = s.at("tasks_per_batch");
    if (s.contains("n_way")) c.stage2.n_way = s.at("n_way");
    if (s.contains("k_shot")) c.stage2.k_shot = s.at("k_shot");
    if (s.contains("query_size")) c.stage2.query_size = s.at("query_size");
    if (s.contains("lr")) c.stage2.lr = s.at("lr");
  }
  if (c.stage1.epochs < 1 || c.stage1.batch_size < 1 || c.stage1.lr <= 0 ||
      c.stage1.early_stop_patience < 1)
    throw std::invalid_argument("train config: bad stage1 values");
  if (c.stage2.episodes < 1 || c.stage2.tasks_per_batch < 1 ||
      c.stage2.n_way < 1 || c.stage2.k_shot < 1 || c.stage2.query_size < 1 ||
      c.stage2.lr < 0)
    throw std::invalid_argument("train config: bad stage2 values");
  return c;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"stage1",
           {{"epochs", c.stage1.epochs},
            {"batch_size", c.stage1.batch_size},
            {"lr", c.stage1.lr},
            {"early_stop_patience", c.stage1.early_stop_patience}}},
          {"stage2",
           {{"episodes", c.stage2.episodes},
            {"tasks_per_batch", c.stage2.tasks_per_batch},
            {"n_way", c.stage2.n_way},
            {"k_shot", c.stage2.k_shot},
            {"query_size", c.stage2.query_size},
            {"lr", c.stage2.lr}}}};
}

Episode sample_episode(const DatasetSplit& data, int n_way, int k_shot,
                       int query_size, Rng& rng) {
  if (n_way < 1 || n_way > data.n_base)
    throw std::invalid_argument("sample_episode: n_way outside [1, n_base]");
  // scenes holding each base class, indexed once per call (cheap at this scale)
  std::vector<std::vector<int>> holders(data.n_base);
  for (std::size_t i = 0; i < data.base_train.size(); ++i)
    for (const auto& b : data.base_train[i].annotations)
      if (holders[b.class_id].empty() ||
          holders[b.class_id].back() != static_cast<int>(i))
        holders[b.class_id].push_back(static_cast<int>(i));

  for (int attempt = 0; attempt < 20; ++attempt) {
    // classes without replacement
    std::vector<int> ids(data.n_base);
    for (int i = 0; i < data.n_base; ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(n_way);

    Episode ep;
    ep.label_set = ids;
    std::set<int> used_scenes;
    bool ok = true;
    for (int cid : ids) {
      EpisodeSupport sup;
      sup.class_id = cid;
      std::vector<int> cand = holders[cid];
      rng.shuffle(cand);
      for (int sidx : cand) {
        if (static_cast<int>(sup.shots.size()) >= k_shot) break;
        if (used_scenes.count(sidx)) continue;
        const Scene& sc = data.base_train[sidx];
        bool took = false;
        for (const auto& b : sc.annotations) {
          if (b.class_id != cid) continue;
          if (static_cast<int>(sup.shots.size()) >= k_shot) break;
          sup.shots.push_back({&sc, b});
          took = true;
        }
        if (took) used_scenes.insert(sidx);
      }
      if (static_cast<int>(sup.shots.size()) < k_shot) {
        ok = false;
        break;
      }
      ep.support.push_back(std::move(sup));
    }
    if (!ok) continue;

    // query scenes: contain a label-set class, never a support scene
    std::vector<int> qcand;
    for (std::size_t i = 0; i < data.base_train.size(); ++i) {
      if (used_scenes.count(static_cast<int>(i))) continue;
      for (const auto& b : data.base_train[i].annotations)
        if (std::find(ids.begin(), ids.end(), b.class_id) != ids.end()) {
          qcand.push_back(static_cast<int>(i));
          break;
        }
    }
    if (static_cast<int>(qcand.size()) < query_size) continue;
    rng.shuffle(qcand);
    for (int qi = 0; qi < query_size; ++qi) {
      const Scene& sc = data.base_train[qcand[qi]];
      EpisodeQuery q;
      q.scene = &sc;
      for (const auto& b : sc.annotations)
        if (std::find(ids.begin(), ids.end(), b.class_id) != ids.end())
          q.boxes.push_back(b);
      ep.query.push_back(std::move(q));
    }
    return ep;
  }
  throw std::runtime_error("sample_episode: could not satisfy the request");
}

Tensor episode_loss(const FeatureExtractor& f, const CodeGenerator& g,
                    const Episode& ep, Tape* tape, LossParts* parts) {
  const int n_way = static_cast<int>(ep.label_set.size());
  std::vector<ClassCode> codes;
  for (const auto& sup : ep.support) {
    std::vector<Tensor> crops;
    for (const auto& shot : sup.shots)
      crops.push_back(crop_resize(shot.scene->image, shot.box));
    codes.push_back(g.generate(stack_images(crops), tape));
  }

  std::vector<const Scene*> scenes;
  std::vector<std::vector<BoxAnnotation>> boxes;
  for (const auto& q : ep.query) {
    scenes.push_back(q.scene);
    // class ids remapped to label-set slots for target rendering
    std::vector<BoxAnnotation> remapped = q.boxes;
    for (auto& b : remapped) {
      const auto it =
          std::find(ep.label_set.begin(), ep.label_set.end(), b.class_id);
      b.class_id = static_cast<int>(it - ep.label_set.begin());
    }
    boxes.push_back(std::move(remapped));
  }
  Tensor m = f.forward(stack_scene_images(scenes), tape);
  StackedTargets tg = stack_targets(boxes, n_way);

  std::vector<const ClassCode*> code_ptrs;
  for (const auto& c : codes) code_ptrs.push_back(&c);
  SharedCodes inert{Tensor::zeros({kFeatureChannels}),
                    Tensor::zeros({kFeatureChannels})};
  return detection_loss(m, code_ptrs, inert, tg, /*with_offset=*/false, tape,
                        parts);
}

Stage1Result train_stage1(const DatasetSplit& data, const Stage1Config& cfg,
                          std::uint64_t seed, std::ostream* csv_log,
                          const std::string& checkpoint_dir) {
  if (data.base_train.empty() || data.base_val.empty())
    throw std::invalid_argument("train_stage1: empty split");
  Rng rng(seed);
  Stage1Result r;
  r.f = FeatureExtractor::init(rng);
  for (int k = 0; k < data.n_base; ++k) r.base_codes.push_back(ClassCode::init(rng));
  r.shared = SharedCodes::init(rng);

  std::vector<Tensor> params = r.f.params();
  for (auto& c : r.base_codes) {
    params.push_back(c.centre);
    params.push_back(c.width);
    params.push_back(c.height);
  }
  params.push_back(r.shared.offset_x);
  params.push_back(r.shared.offset_y);
  for (auto& p : params) p.set_requires_grad(true);
  Adam opt(params, cfg.lr);

  std::vector<const ClassCode*> code_ptrs;
  for (const auto& c : r.base_codes) code_ptrs.push_back(&c);

  auto eval_loss = [&](const std::vector<Scene>& scenes) {
    double total = 0;
    int batches = 0;
    for (std::size_t i = 0; i < scenes.size(); i += cfg.batch_size) {
      std::vector<const Scene*> sp;
      std::vector<std::vector<BoxAnnotation>> bx;
      for (std::size_t j = i;
           j < std::min(scenes.size(), i + static_cast<std::size_t>(cfg.batch_size));
           ++j) {
        sp.push_back(&scenes[j]);
        bx.push_back(scenes[j].annotations);
      }
      Tensor m = r.f.forward(stack_scene_images(sp));
      total += detection_loss(m, code_ptrs, r.shared, stack_targets(bx, data.n_base),
                              true, nullptr, nullptr)
                   .value();
      ++batches;
    }
    return total / std::max(1, batches);
  };

  const auto t0 = Clock::now();
  r.epoch0_val_loss = eval_loss(data.base_val);
  r.best_val_loss = r.epoch0_val_loss;
  write_csv_row(csv_log, 0, 0, "val",
                {r.epoch0_val_loss, 0, 0}, ms_since(t0));

  auto best = snapshot(params);
  int since_best = 0;
  int step = 0;
  std::vector<int> order(data.base_train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_train = 0;
    int epoch_batches = 0;
    for (std::size_t i = 0; i < order.size();
         i += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const Scene*> sp;
      std::vector<std::vector<BoxAnnotation>> bx;
      for (std::size_t j = i;
           j < std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
           ++j) {
        sp.push_back(&data.base_train[order[j]]);
        bx.push_back(data.base_train[order[j]].annotations);
      }
      Tape tape;
      LossParts parts;
      Tensor m = r.f.forward(stack_scene_images(sp), &tape);
      Tensor loss = detection_loss(m, code_ptrs, r.shared,
                                   stack_targets(bx, data.n_base), true, &tape,
                                   &parts);
      backward(loss, tape);
      opt.step();
      ++step;
      epoch_train += parts.total();
      ++epoch_batches;
      write_csv_row(csv_log, step, epoch, "train", parts, ms_since(t0));
    }
    r.final_train_loss = epoch_train / std::max(1, epoch_batches);

    const double val = eval_loss(data.base_val);
    write_csv_row(csv_log, step, epoch, "val", {val, 0, 0}, ms_since(t0));
    r.epochs_run = epoch;
    if (val < r.best_val_loss) {
      r.best_val_loss = val;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
    if (!checkpoint_dir.empty() && epoch % 10 == 0) {
      Checkpoint cp;
      save_stage1(r, cp);
      cp.save(checkpoint_dir + "/stage1_epoch" + std::to_string(epoch) + ".ckpt");
    }
  }
  restore(params, best);

  r.f.freeze();
  r.shared.offset_x.freeze();
  r.shared.offset_y.freeze();
  for (auto& c : r.base_codes) {
    c.centre.set_requires_grad(false);
    c.width.set_requires_grad(false);
    c.height.set_requires_grad(false);
  }
  if (!checkpoint_dir.empty()) {
    Checkpoint cp;
    save_stage1(r, cp);
    cp.save(checkpoint_dir + "/stage1_best.ckpt");
  }
  return r;
}

void save_stage1(const Stage1Result& r, Checkpoint& cp) {
  r.f.save_into(cp, "extractor");
  cp.put("shared.offset_x", r.shared.offset_x);
  cp.put("shared.offset_y", r.shared.offset_y);
  for (std::size_t k = 0; k < r.base_codes.size(); ++k) {
    const std::string p = "code." + std::to_string(k);
    cp.put(p + ".centre", r.base_codes[k].centre);
    cp.put(p + ".width", r.base_codes[k].width);
    cp.put(p + ".height", r.base_codes[k].height);
  }
  cp.put("meta.num_base", Tensor::scalar(static_cast<Scalar>(r.base_codes.size())));
}

Stage1Result load_stage1(const Checkpoint& cp) {
  Stage1Result r;
  r.f = FeatureExtractor::load_from(cp, "extractor");
  r.f.freeze();
  r.shared.offset_x = cp.get("shared.offset_x");
  r.shared.offset_y = cp.get("shared.offset_y");
  r.shared.offset_x.freeze();
  r.shared.offset_y.freeze();
  const int n = static_cast<int>(cp.get("meta.num_base").value());
  for (int k = 0; k < n; ++k) {
    const std::string p = "code." + std::to_string(k);
    ClassCode c = ClassCode::zeros();
    c.centre = cp.get(p + ".centre");
    c.width = cp.get(p + ".width");
    c.height = cp.get(p + ".height");
    r.base_codes.push_back(c);
  }
  return r;
}

Stage2Result meta_train_stage2(const FeatureExtractor& f, CodeGenerator& g,
                               const DatasetSplit& data,
                               const Stage2Config& cfg, std::uint64_t seed,
                               std::ostream* csv_log) {
  if (!f.frozen())
    throw std::invalid_argument("meta_train_stage2: extractor must be frozen");
  const std::uint64_t f_digest_before = weight_digest(f.params());

  Rng rng(seed);
  Rng val_rng = rng.fork(0xE7A1);
  std::vector<Episode> val_eps;
  for (int i = 0; i < 8; ++i)
    val_eps.push_back(sample_episode(data, cfg.n_way, cfg.k_shot,
                                     cfg.query_size, val_rng));
  auto val_loss = [&]() {
    double total = 0;
    for (const auto& ep : val_eps)
      total += episode_loss(f, g, ep, nullptr).value();
    return total / val_eps.size();
  };

  Stage2Result res;
  res.val_loss_init = val_loss();

  std::vector<Tensor> params = g.params();
  for (auto& p : params) p.set_requires_grad(true);
  Adam opt(params, cfg.lr);

  const int steps = std::max(1, cfg.episodes / cfg.tasks_per_batch);
  const auto t0 = Clock::now();
  for (int stepi = 1; stepi <= steps; ++stepi) {
    Tape tape;
    Tensor batch;
    LossParts acc;
    for (int t = 0; t < cfg.tasks_per_batch; ++t) {
      Episode ep = sample_episode(data, cfg.n_way, cfg.k_shot, cfg.query_size, rng);
      LossParts parts;
      Tensor li = episode_loss(f, g, ep, &tape, &parts);
      batch = batch.defined() ? add(batch, li, &tape) : li;
      acc.centre += parts.centre / cfg.tasks_per_batch;
      acc.size += parts.size / cfg.tasks_per_batch;
    }
    Tensor loss = mul_scalar(batch, 1.0 / cfg.tasks_per_batch, &tape);
    backward(loss, tape);
    opt.step();
    res.steps_run = stepi;
    write_csv_row(csv_log, stepi, 0, "meta", acc, ms_since(t0));
  }

  res.val_loss_final = val_loss();
  INCDET_CHECK(weight_digest(f.params()) == f_digest_before,
               "stage 2 mutated the frozen extractor");
  return res;
}

}  // namespace incdet
