#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "incdet/codec.hpp"
#include "incdet/rng.hpp"
#include "incdet/tensor.hpp"

namespace incdet {

constexpr int kImageSize = 64;

struct ShapeClass {
  int id = 0;
  std::string shape;  // circle|square|triangle|cross|ring|diamond|star|hexagon|crescent
  std::array<double, 3> color{};
  double min_size = 12, max_size = 26;  // rendered diameter in pixels
};

// Nine classes: ids 0-5 are the base split, 6-8 the novel split. Colors are
// deliberately shared across shapes (circle/ring both red, etc.) so that a
// class is identified by geometry, not by a color histogram.
std::vector<ShapeClass> default_roster();

struct Scene {
  Tensor image;  // [3,64,64], values in [0,1]
  std::vector<BoxAnnotation> annotations;
  std::uint64_t seed = 0;
};

// Deterministic given the rng state: textured background, 1-4 anti-aliased
// shapes with tight coverage-derived boxes, pairwise IoU < 0.3. If
// must_include_id >= 0 the first object is of that class.
Scene generate_scene(const std::vector<ShapeClass>& roster, Rng& rng,
                     int must_include_id = -1);

struct SplitCounts {
  int base_train = 400;
  int base_val = 60;
  int support_pool = 90;
  int novel_test = 200;
};

struct DatasetSplit {
  std::vector<ShapeClass> roster;
  int n_base = 0, n_novel = 0;
  std::vector<Scene> base_train;   // base classes only
  std::vector<Scene> base_val;     // base classes only
  std::vector<Scene> support_pool; // scene i guarantees novel class (i mod n_novel)
  std::vector<Scene> novel_test;   // full roster mix
};

// Pure function of (roster, seed): every scene's RNG is derived from
// (seed, split tag, index), so regeneration is exact and storage-free.
DatasetSplit make_split(const std::vector<ShapeClass>& roster, int n_base,
                        int n_novel, const SplitCounts& counts,
                        std::uint64_t seed);

// Support samples for `class_id`: scenes from the pool holding at least one
// instance, paired with that class's boxes only, until `k_shot` boxes are
// collected. `resample` offsets the scan start so repeated draws differ.
struct SupportSample {
  const Scene* scene;
  std::vector<BoxAnnotation> boxes;  // boxes of the requested class only
};
std::vector<SupportSample> draw_support(const DatasetSplit& split, int class_id,
                                        int k_shot, int resample = 0);

}  // namespace incdet
