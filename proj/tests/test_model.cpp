#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "incdet/model.hpp"
#include "incdet/ops.hpp"
#include "incdet/synth.hpp"

using namespace incdet;

namespace {

Tensor random_image_batch(Rng& rng, int n) {
  Tensor t = Tensor::zeros({n, 3, 64, 64});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform();
  return t;
}

// Input pixel -> affected output cells, tracked through the layer geometry:
// four k3 s2 p1 convs then two k2 s2 transposed convs.
std::pair<int, int> footprint_1d(int p) {
  int lo = p, hi = p;
  for (int layer = 0; layer < 4; ++layer) {
    lo = (lo - 1 + 1) / 2;        // ceil((lo-1)/2) for lo>=1
    hi = (hi + 1) / 2;            // floor((hi+1)/2)
    lo = std::max(lo, 0);
  }
  for (int layer = 0; layer < 2; ++layer) {
    lo = 2 * lo;
    hi = 2 * hi + 1;
  }
  return {lo, hi};
}

}  // namespace

TEST_CASE("extract_features: shape contract and determinism") {
  Rng rng(1);
  auto f = FeatureExtractor::init(rng);
  Rng data_rng(2);
  Tensor imgs = random_image_batch(data_rng, 2);

  Tensor m1 = f.forward(imgs);
  CHECK(m1.shape() == std::vector<int>{2, 32, 16, 16});

  Tensor m2 = f.forward(imgs);
  CHECK(m1.data_vec() == m2.data_vec());  // bit-exact

  Tensor bad = Tensor::zeros({1, 3, 62, 64});
  CHECK_THROWS_AS(f.forward(bad), std::invalid_argument);
}

TEST_CASE("perturbing one pixel moves features mostly inside its footprint") {
  // Group norm couples statistics across the whole map, so changes outside
  // the geometric receptive field are not exactly zero — but they must be
  // tiny next to the in-footprint response.
  Rng rng(3);
  auto f = FeatureExtractor::init(rng);
  Rng data_rng(4);
  Tensor img = random_image_batch(data_rng, 1);
  Tensor base = f.forward(img);

  const int px = 33, py = 30;
  img.data()[(static_cast<std::int64_t>(0) * 64 + py) * 64 + px] += 0.75;
  Tensor bumped = f.forward(img);

  auto [x_lo, x_hi] = footprint_1d(px);
  auto [y_lo, y_hi] = footprint_1d(py);
  double inside_max = 0, outside_max = 0;
  for (int c = 0; c < 32; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double d = std::abs(bumped.at4(0, c, y, x) - base.at4(0, c, y, x));
        if (x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi)
          inside_max = std::max(inside_max, d);
        else
          outside_max = std::max(outside_max, d);
      }
  CHECK(inside_max > 0.0);
  CHECK(outside_max < 0.25 * inside_max);
}

TEST_CASE("locate: zero code saturates the centre map at 0.5") {
  Rng rng(5);
  Tensor m = Tensor::zeros({1, 32, 16, 16});
  for (std::int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.normal();
  auto out = locate(m, ClassCode::zeros(), SharedCodes{Tensor::zeros({32}), Tensor::zeros({32})});
  CHECK(out.centre.shape() == std::vector<int>{1, 1, 16, 16});
  CHECK(out.size.shape() == std::vector<int>{1, 2, 16, 16});
  CHECK(out.offset.shape() == std::vector<int>{1, 2, 16, 16});
  for (std::int64_t i = 0; i < out.centre.numel(); ++i)
    CHECK(out.centre.data()[i] == 0.5);
}

TEST_CASE("locate: one-hot code reads out a single feature channel") {
  Rng rng(6);
  Tensor m = Tensor::zeros({1, 32, 16, 16});
  for (std::int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.normal();
  const int j = 11;
  ClassCode code = ClassCode::zeros();
  code.centre.data()[j] = 1.0;
  auto out = locate(m, code, SharedCodes{Tensor::zeros({32}), Tensor::zeros({32})});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const double logit = m.at4(0, j, y, x);
      CHECK(out.centre.at4(0, 0, y, x) == doctest::Approx(1.0 / (1.0 + std::exp(-logit))));
    }
}

TEST_CASE("locate equals the general-conv route") {
  Rng rng(7);
  Tensor m = Tensor::zeros({2, 32, 16, 16});
  for (std::int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.normal();
  ClassCode code = ClassCode::init(rng);
  SharedCodes shared = SharedCodes::init(rng);
  auto out = locate(m, code, shared);

  Tensor kw = Tensor::from({1, 32, 1, 1}, code.width.data_vec());
  Tensor via_conv = conv2d(m, kw, 1, 0);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        CHECK(out.size.at4(n, 0, y, x) ==
              kSizeOutputGain * via_conv.at4(n, 0, y, x));

  Tensor ko = Tensor::from({1, 32, 1, 1}, shared.offset_y.data_vec());
  Tensor via_conv_o = conv2d(m, ko, 1, 0);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        CHECK(out.offset.at4(n, 1, y, x) == via_conv_o.at4(n, 0, y, x));
}

TEST_CASE("code generator: clone initialisation copies values, not storage") {
  Rng rng(8);
  auto f = FeatureExtractor::init(rng);
  auto g = CodeGenerator::init_from(f.encoder, rng);
  CHECK(g.encoder.w1.data_vec() == f.encoder.w1.data_vec());
  CHECK(g.encoder.w4.data_vec() == f.encoder.w4.data_vec());
  g.encoder.w1.data()[0] += 1.0;
  CHECK(g.encoder.w1.data()[0] != f.encoder.w1.data()[0]);
}

TEST_CASE("generate: single crop means the crop's own pooled vector") {
  Rng rng(9);
  auto f = FeatureExtractor::init(rng);
  auto g = CodeGenerator::init_from(f.encoder, rng);
  Rng data_rng(10);
  Tensor one = random_image_batch(data_rng, 1);
  auto code = g.generate(one);
  CHECK(code.centre.shape() == std::vector<int>{32});

  // manual route: encoder -> head conv -> pool; mean over one row is itself
  Tensor h = g.encoder.forward(one);
  Tensor logits = conv2d(h, g.head_centre, 1, 0);
  Tensor pooled = global_avg_pool(logits);
  for (int i = 0; i < 32; ++i)
    CHECK(code.centre.data()[i] == pooled.data()[i]);
}

TEST_CASE("generate: permutation and duplication leave the code bit-identical") {
  Rng rng(11);
  auto f = FeatureExtractor::init(rng);
  auto g = CodeGenerator::init_from(f.encoder, rng);
  Rng data_rng(12);
  Tensor crops = random_image_batch(data_rng, 4);

  // permute rows 0..3 -> 3,1,0,2
  const int perm[4] = {3, 1, 0, 2};
  Tensor shuffled = Tensor::zeros({4, 3, 64, 64});
  const std::int64_t per = 3 * 64 * 64;
  for (int i = 0; i < 4; ++i)
    std::copy(crops.data() + perm[i] * per, crops.data() + (perm[i] + 1) * per,
              shuffled.data() + i * per);

  auto a = g.generate(crops);
  auto b = g.generate(shuffled);
  CHECK(a.centre.data_vec() == b.centre.data_vec());
  CHECK(a.width.data_vec() == b.width.data_vec());
  CHECK(a.height.data_vec() == b.height.data_vec());

  // duplicate every crop
  Tensor doubled = Tensor::zeros({8, 3, 64, 64});
  std::copy(crops.data(), crops.data() + 4 * per, doubled.data());
  std::copy(crops.data(), crops.data() + 4 * per, doubled.data() + 4 * per);
  auto c = g.generate(doubled);
  CHECK(a.centre.data_vec() == c.centre.data_vec());
  CHECK(a.width.data_vec() == c.width.data_vec());
  CHECK(a.height.data_vec() == c.height.data_vec());
}

TEST_CASE("crop_resize: geometry and degenerate rejection") {
  // image with a bright square exactly at (16,16)-(32,32)
  Tensor img = Tensor::zeros({3, 64, 64});
  for (int y = 16; y < 32; ++y)
    for (int x = 16; x < 32; ++x) img.data()[static_cast<std::int64_t>(y) * 64 + x] = 1.0;

  BoxAnnotation box{0, 16, 16, 32, 32};
  Tensor crop = crop_resize(img, box);
  CHECK(crop.shape() == std::vector<int>{3, 64, 64});
  // centre of the crop is deep inside the bright region
  CHECK(crop.data()[static_cast<std::int64_t>(32) * 64 + 32] == doctest::Approx(1.0));
  // corners include the 10% padding ring, which is dark
  CHECK(crop.data()[0] < 0.5);

  CHECK_THROWS_AS(crop_resize(img, BoxAnnotation{0, -30, -30, -20, -20}),
                  std::invalid_argument);
}

TEST_CASE("feature extractor freeze trips on any later gradient") {
  Rng rng(13);
  auto f = FeatureExtractor::init(rng);
  CHECK(!f.frozen());
  f.freeze();
  CHECK(f.frozen());
  for (const auto& p : f.params()) CHECK(!p.requires_grad());

  // ops on frozen weights no longer record tape entries
  Rng data_rng(14);
  Tensor img = random_image_batch(data_rng, 1);
  Tape tape;
  Tensor m = f.forward(img, &tape);
  CHECK(tape.size() == 0);
  CHECK(!m.requires_grad());
}

TEST_CASE("checkpoint round-trip: extractor and generator reload to f32-identical nets") {
  Rng rng(15);
  auto f = FeatureExtractor::init(rng);
  auto g = CodeGenerator::init_from(f.encoder, rng);
  Checkpoint cp;
  f.save_into(cp, "extractor");
  g.save_into(cp, "generator");
  auto bytes = cp.serialize();
  Checkpoint cp2 = Checkpoint::deserialize(bytes);
  auto f2 = FeatureExtractor::load_from(cp2, "extractor");
  auto g2 = CodeGenerator::load_from(cp2, "generator");

  Rng data_rng(16);
  Tensor img = random_image_batch(data_rng, 1);
  // The reloaded nets are f32-quantized; outputs agree to f32 precision.
  Tensor m1 = f.forward(img);
  Tensor m2 = f2.forward(img);
  for (std::int64_t i = 0; i < m1.numel(); ++i)
    CHECK(m1.data()[i] == doctest::Approx(m2.data()[i]).epsilon(1e-4));
  CHECK(g2.head_centre.shape() == g.head_centre.shape());
}
