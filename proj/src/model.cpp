#include "incdet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "incdet/ops.hpp"

namespace incdet {

namespace {

// Kaiming-style init: normal with std sqrt(2 / fan_in).
Tensor conv_init(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor w = Tensor::zeros(shape);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.normal(0.0, stddev);
  w.set_requires_grad(true);
  return w;
}

Tensor conv_block(const Tensor& x, const Tensor& w, int stride, int pad,
                  Tape* tape) {
  return relu(group_norm(conv2d(x, w, stride, pad, tape), kGnGroups, tape), tape);
}

Tensor deconv_block(const Tensor& x, const Tensor& w, Tape* tape) {
  return relu(group_norm(conv_transpose2d(x, w, 2, tape), kGnGroups, tape), tape);
}

Tensor code_init(Rng& rng, int c) {
  Tensor t = Tensor::zeros({c});
  const double stddev = std::sqrt(1.0 / c);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, stddev);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

Encoder Encoder::init(Rng& rng) {
  Encoder e;
  e.w1 = conv_init(rng, {16, 3, 3, 3}, 3 * 9);
  e.w2 = conv_init(rng, {32, 16, 3, 3}, 16 * 9);
  e.w3 = conv_init(rng, {64, 32, 3, 3}, 32 * 9);
  e.w4 = conv_init(rng, {64, 64, 3, 3}, 64 * 9);
  return e;
}

Encoder Encoder::clone_weights() const {
  Encoder e;
  e.w1 = w1.clone();
  e.w2 = w2.clone();
  e.w3 = w3.clone();
  e.w4 = w4.clone();
  return e;
}

Tensor Encoder::forward(const Tensor& images, Tape* tape) const {
  Tensor h = conv_block(images, w1, 2, 1, tape);
  h = conv_block(h, w2, 2, 1, tape);
  h = conv_block(h, w3, 2, 1, tape);
  return conv_block(h, w4, 2, 1, tape);
}

std::vector<Tensor> Encoder::params() const { return {w1, w2, w3, w4}; }

void Encoder::save_into(Checkpoint& cp, const std::string& prefix) const {
  cp.put(prefix + ".w1", w1);
  cp.put(prefix + ".w2", w2);
  cp.put(prefix + ".w3", w3);
  cp.put(prefix + ".w4", w4);
}

void Encoder::load_from(const Checkpoint& cp, const std::string& prefix) {
  w1 = cp.get(prefix + ".w1");
  w2 = cp.get(prefix + ".w2");
  w3 = cp.get(prefix + ".w3");
  w4 = cp.get(prefix + ".w4");
}

FeatureExtractor FeatureExtractor::init(Rng& rng) {
  FeatureExtractor f;
  f.encoder = Encoder::init(rng);
  f.dw1 = conv_init(rng, {64, 48, 2, 2}, 64 * 4);
  f.dw2 = conv_init(rng, {48, kFeatureChannels, 2, 2}, 48 * 4);
  return f;
}

Tensor FeatureExtractor::forward(const Tensor& images, Tape* tape) const {
  if (images.ndim() != 4 || images.dim(2) % kFeatureStride != 0 ||
      images.dim(3) % kFeatureStride != 0)
    throw std::invalid_argument("extract_features: input dims must be 4D and divisible by stride");
  Tensor h = encoder.forward(images, tape);
  h = deconv_block(h, dw1, tape);
  return deconv_block(h, dw2, tape);
}

std::vector<Tensor> FeatureExtractor::params() const {
  auto p = encoder.params();
  p.push_back(dw1);
  p.push_back(dw2);
  return p;
}

void FeatureExtractor::freeze() {
  for (auto& p : params()) p.freeze();
}

bool FeatureExtractor::frozen() const {
  for (const auto& p : params())
    if (!p.frozen()) return false;
  return true;
}

void FeatureExtractor::save_into(Checkpoint& cp, const std::string& prefix) const {
  encoder.save_into(cp, prefix + ".enc");
  cp.put(prefix + ".dw1", dw1);
  cp.put(prefix + ".dw2", dw2);
}

FeatureExtractor FeatureExtractor::load_from(const Checkpoint& cp,
                                             const std::string& prefix) {
  FeatureExtractor f;
  f.encoder.load_from(cp, prefix + ".enc");
  f.dw1 = cp.get(prefix + ".dw1");
  f.dw2 = cp.get(prefix + ".dw2");
  return f;
}

ClassCode ClassCode::init(Rng& rng) {
  return {code_init(rng, kFeatureChannels), code_init(rng, kFeatureChannels),
          code_init(rng, kFeatureChannels)};
}

ClassCode ClassCode::zeros() {
  return {Tensor::zeros({kFeatureChannels}), Tensor::zeros({kFeatureChannels}),
          Tensor::zeros({kFeatureChannels})};
}

ClassCode ClassCode::clone() const {
  return {centre.clone(), width.clone(), height.clone()};
}

SharedCodes SharedCodes::init(Rng& rng) {
  return {code_init(rng, kFeatureChannels), code_init(rng, kFeatureChannels)};
}

SharedCodes SharedCodes::clone() const {
  return {offset_x.clone(), offset_y.clone()};
}

LocateOutput locate(const Tensor& m, const ClassCode& code,
                    const SharedCodes& shared, Tape* tape) {
  LocateOutput out;
  out.centre = sigmoid(conv1x1(m, code.centre, tape), tape);
  // Extents are in input pixels (12-26 for our objects) while the normalized
  // features keep the raw dot products at O(1); the fixed gain lets the codes
  // stay O(1) instead of having to grow 20x through the optimizer.
  out.size = mul_scalar(
      concat({conv1x1(m, code.width, tape), conv1x1(m, code.height, tape)}, 1, tape),
      kSizeOutputGain, tape);
  out.offset = concat({conv1x1(m, shared.offset_x, tape), conv1x1(m, shared.offset_y, tape)},
                      1, tape);
  return out;
}

CodeGenerator CodeGenerator::init_from(const Encoder& extractor_encoder, Rng& rng) {
  CodeGenerator g;
  g.encoder = extractor_encoder.clone_weights();
  for (auto& p : g.encoder.params()) p.set_requires_grad(true);
  g.head_centre = conv_init(rng, {kFeatureChannels, 64, 1, 1}, 64);
  g.head_width = conv_init(rng, {kFeatureChannels, 64, 1, 1}, 64);
  g.head_height = conv_init(rng, {kFeatureChannels, 64, 1, 1}, 64);
  return g;
}

ClassCode CodeGenerator::generate(const Tensor& crops, Tape* tape) const {
  if (crops.ndim() != 4 || crops.dim(0) < 1)
    throw std::invalid_argument("generate_code: need a non-empty [B,3,H,W] crop batch");
  Tensor h = encoder.forward(crops, tape);  // [B,64,4,4]
  auto head = [&](const Tensor& w) {
    Tensor logits = conv2d(h, w, 1, 0, tape);          // [B,c,4,4]
    Tensor pooled = global_avg_pool(logits, tape);     // [B,c]
    return mean_rows(pooled, tape);                    // [c], mean over crops
  };
  return {head(head_centre), head(head_width), head(head_height)};
}

std::vector<Tensor> CodeGenerator::params() const {
  auto p = encoder.params();
  p.push_back(head_centre);
  p.push_back(head_width);
  p.push_back(head_height);
  return p;
}

void CodeGenerator::save_into(Checkpoint& cp, const std::string& prefix) const {
  encoder.save_into(cp, prefix + ".enc");
  cp.put(prefix + ".head_centre", head_centre);
  cp.put(prefix + ".head_width", head_width);
  cp.put(prefix + ".head_height", head_height);
}

CodeGenerator CodeGenerator::load_from(const Checkpoint& cp,
                                       const std::string& prefix) {
  CodeGenerator g;
  g.encoder.load_from(cp, prefix + ".enc");
  g.head_centre = cp.get(prefix + ".head_centre");
  g.head_width = cp.get(prefix + ".head_width");
  g.head_height = cp.get(prefix + ".head_height");
  return g;
}

Tensor crop_resize(const Tensor& image, const BoxAnnotation& box) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("crop_resize: image must be [3,H,W]");
  const int ih = image.dim(1), iw = image.dim(2);
  const double pad_x = 0.1 * box.w(), pad_y = 0.1 * box.h();
  const double x1 = std::max(0.0, box.x1 - pad_x);
  const double y1 = std::max(0.0, box.y1 - pad_y);
  const double x2 = std::min(static_cast<double>(iw), box.x2 + pad_x);
  const double y2 = std::min(static_cast<double>(ih), box.y2 + pad_y);
  if (!(x2 - x1 > 1e-6) || !(y2 - y1 > 1e-6))
    throw std::invalid_argument("crop_resize: degenerate crop");

  const int out = kModelInputSize;
  Tensor dst = Tensor::zeros({3, out, out});
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox) {
      const double sx = x1 + (ox + 0.5) * (x2 - x1) / out - 0.5;
      const double sy = y1 + (oy + 0.5) * (y2 - y1) / out - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double tx = sx - x0, ty = sy - y0;
      const int x0c = std::clamp(x0, 0, iw - 1), x1c = std::clamp(x0 + 1, 0, iw - 1);
      const int y0c = std::clamp(y0, 0, ih - 1), y1c = std::clamp(y0 + 1, 0, ih - 1);
      for (int ch = 0; ch < 3; ++ch) {
        const Scalar* plane = image.data() + static_cast<std::int64_t>(ch) * ih * iw;
        const double v =
            (plane[static_cast<std::int64_t>(y0c) * iw + x0c] * (1 - tx) +
             plane[static_cast<std::int64_t>(y0c) * iw + x1c] * tx) * (1 - ty) +
            (plane[static_cast<std::int64_t>(y1c) * iw + x0c] * (1 - tx) +
             plane[static_cast<std::int64_t>(y1c) * iw + x1c] * tx) * ty;
        dst.data()[(static_cast<std::int64_t>(ch) * out + oy) * out + ox] = v;
      }
    }
  return dst;
}

ClassCode generate_code(const CodeGenerator& g, const SupportSet& support,
                        Tape* tape) {
  if (support.samples.empty())
    throw std::invalid_argument("generate_code: empty support set");
  std::vector<Tensor> crops;
  int skipped = 0;
  for (const auto& sample : support.samples)
    for (const auto& box : sample.boxes) {
      try {
        crops.push_back(crop_resize(sample.image, box));
      } catch (const std::invalid_argument&) {
        ++skipped;
        std::fprintf(stderr,
                     "generate_code: skipping degenerate crop for class %d\n",
                     support.class_id);
      }
    }
  if (crops.empty())
    throw std::invalid_argument(
        skipped ? "generate_code: every support crop was degenerate"
                : "generate_code: support set has no boxes");
  return g.generate(stack_images(crops), tape);
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty list");
  const auto& s = images[0].shape();
  if (s.size() != 3) throw std::invalid_argument("stack_images: entries must be 3D");
  Tensor out = Tensor::zeros({static_cast<int>(images.size()), s[0], s[1], s[2]});
  const std::int64_t per = images[0].numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s)
      throw std::invalid_argument("stack_images: inconsistent shapes");
    std::copy(images[i].data(), images[i].data() + per, out.data() + static_cast<std::int64_t>(i) * per);
  }
  return out;
}

}  // namespace incdet
