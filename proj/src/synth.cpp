#include "incdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace incdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

double box_iou(const BoxAnnotation& a, const BoxAnnotation& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.w() * a.h() + b.w() * b.h() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Even-odd ray cast; vertices in canonical coordinates.
bool in_polygon(const std::vector<std::array<double, 2>>& v, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i][1] > y) != (v[j][1] > y) &&
        x < (v[j][0] - v[i][0]) * (y - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0])
      in = !in;
  }
  return in;
}

std::vector<std::array<double, 2>> regular_polygon(int n, double radius,
                                                   double phase) {
  std::vector<std::array<double, 2>> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * kPi * i / n;
    v[static_cast<std::size_t>(i)] = {radius * std::cos(a), radius * std::sin(a)};
  }
  return v;
}

std::vector<std::array<double, 2>> star_polygon() {
  std::vector<std::array<double, 2>> v;
  for (int i = 0; i < 10; ++i) {
    const double a = kPi / 2 + kPi * i / 5.0;
    const double r = (i % 2 == 0) ? 1.0 : 0.45;
    v.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return v;
}

// All canonical shapes fit inside the unit disk, so a rotated instance of
// rendered size s never exceeds a circle of diameter s.
bool inside_shape(const std::string& shape, double x, double y) {
  static const auto tri = regular_polygon(3, 1.0, kPi / 2);
  static const auto hex = regular_polygon(6, 1.0, 0.0);
  static const auto star = star_polygon();
  const double r2 = x * x + y * y;
  if (shape == "circle") return r2 <= 1.0;
  if (shape == "square") return std::abs(x) <= 0.72 && std::abs(y) <= 0.72;
  if (shape == "triangle") return in_polygon(tri, x, y);
  if (shape == "cross")
    return (std::abs(x) <= 0.32 && std::abs(y) <= 1.0) ||
           (std::abs(y) <= 0.32 && std::abs(x) <= 1.0);
  if (shape == "ring") return r2 <= 1.0 && r2 >= 0.55 * 0.55;
  if (shape == "diamond") return std::abs(x) + std::abs(y) <= 1.0;
  if (shape == "star") return in_polygon(star, x, y);
  if (shape == "hexagon") return in_polygon(hex, x, y);
  if (shape == "crescent") {
    const double dx = x - 0.55;
    return r2 <= 1.0 && dx * dx + y * y >= 0.7 * 0.7;
  }
  throw std::invalid_argument("unknown shape: " + shape);
}

// Coverage in [0,1] per pixel via 3x3 supersampling of the rotated/scaled
// shape. Returns false when nothing is covered.
bool render_coverage(const ShapeClass& cls, double cx, double cy, double size,
                     double theta, std::vector<double>& cov, int& px1, int& py1,
                     int& px2, int& py2) {
  const double half = size / 2.0;
  const double c = std::cos(-theta), s = std::sin(-theta);
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half)) - 1);
  const int x_hi = std::min(kImageSize - 1, static_cast<int>(std::ceil(cx + half)) + 1);
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half)) - 1);
  const int y_hi = std::min(kImageSize - 1, static_cast<int>(std::ceil(cy + half)) + 1);

  cov.assign(static_cast<std::size_t>(kImageSize) * kImageSize, 0.0);
  px1 = py1 = kImageSize;
  px2 = py2 = -1;
  static const double sub[3] = {1.0 / 6, 3.0 / 6, 5.0 / 6};
  for (int py = y_lo; py <= y_hi; ++py)
    for (int px = x_lo; px <= x_hi; ++px) {
      int hits = 0;
      for (double sy : sub)
        for (double sx : sub) {
          const double wx = px + sx - cx, wy = py + sy - cy;
          // rotate into canonical frame, then scale to unit coordinates
          const double lx = (wx * c - wy * s) / half;
          const double ly = (wx * s + wy * c) / half;
          if (inside_shape(cls.shape, lx, ly)) ++hits;
        }
      if (hits == 0) continue;
      const double a = hits / 9.0;
      cov[static_cast<std::size_t>(py) * kImageSize + px] = a;
      if (a > 0.05) {
        px1 = std::min(px1, px);
        py1 = std::min(py1, py);
        px2 = std::max(px2, px);
        py2 = std::max(py2, py);
      }
    }
  return px2 >= 0;
}

void paint_background(Tensor& img, Rng& rng) {
  const double base[3] = {rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5),
                          rng.uniform(0.2, 0.5)};
  // value noise: random 9x9 lattice, bilinear to full resolution
  constexpr int kGrid = 8;
  double lattice[kGrid + 1][kGrid + 1];
  for (auto& row : lattice)
    for (auto& v : row) v = rng.uniform();
  const double noise_amp = rng.uniform(0.05, 0.15);

  const double grad_angle = rng.uniform(0, 2 * kPi);
  const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);
  const double grad_amp = rng.uniform(0.0, 0.12);

  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      const double fx = static_cast<double>(x) / kImageSize * kGrid;
      const double fy = static_cast<double>(y) / kImageSize * kGrid;
      const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
      const double tx = fx - ix, ty = fy - iy;
      const double n00 = lattice[iy][ix], n10 = lattice[iy][ix + 1];
      const double n01 = lattice[iy + 1][ix], n11 = lattice[iy + 1][ix + 1];
      const double noise =
          (n00 * (1 - tx) + n10 * tx) * (1 - ty) + (n01 * (1 - tx) + n11 * tx) * ty;
      const double grad =
          ((x * gx + y * gy) / kImageSize - 0.5 * (gx + gy)) * grad_amp;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = base[ch] + (noise - 0.5) * 2.0 * noise_amp + grad;
        img.data()[(static_cast<std::int64_t>(ch) * kImageSize + y) * kImageSize + x] =
            std::clamp(v, 0.0, 1.0);
      }
    }
}

}  // namespace

std::vector<ShapeClass> default_roster() {
  const std::array<double, 3> red{0.85, 0.15, 0.15};
  const std::array<double, 3> green{0.15, 0.75, 0.25};
  const std::array<double, 3> blue{0.2, 0.35, 0.9};
  return {
      {0, "circle", red, 12, 26},    {1, "square", green, 12, 26},
      {2, "triangle", blue, 14, 28}, {3, "cross", green, 14, 28},
      {4, "ring", red, 14, 28},      {5, "diamond", blue, 14, 28},
      {6, "star", red, 16, 28},      {7, "hexagon", green, 12, 26},
      {8, "crescent", blue, 16, 28},
  };
}

Scene generate_scene(const std::vector<ShapeClass>& roster, Rng& rng,
                     int must_include_id) {
  if (roster.empty()) throw std::invalid_argument("generate_scene: empty roster");

  Scene scene;
  scene.image = Tensor::zeros({3, kImageSize, kImageSize});
  paint_background(scene.image, rng);

  const int n_objects = static_cast<int>(rng.uniform_int(1, 4));
  std::vector<double> cov;
  for (int obj = 0; obj < n_objects; ++obj) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      const ShapeClass* cls;
      if (obj == 0 && must_include_id >= 0) {
        cls = nullptr;
        for (const auto& c : roster)
          if (c.id == must_include_id) cls = &c;
        if (!cls)
          throw std::invalid_argument("generate_scene: must_include_id not in roster");
      } else {
        cls = &roster[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(roster.size()) - 1))];
      }
      const double size = rng.uniform(cls->min_size, cls->max_size);
      const double half = size / 2.0;
      const double cx = rng.uniform(half + 1.0, kImageSize - half - 1.0);
      const double cy = rng.uniform(half + 1.0, kImageSize - half - 1.0);
      // Small jitter only: free rotation would alias square into diamond.
      const double theta = rng.uniform(-0.2, 0.2);
      const double brightness = rng.uniform(0.9, 1.1);

      int px1, py1, px2, py2;
      if (!render_coverage(*cls, cx, cy, size, theta, cov, px1, py1, px2, py2))
        continue;
      BoxAnnotation ann{cls->id, static_cast<double>(px1), static_cast<double>(py1),
                        static_cast<double>(px2 + 1), static_cast<double>(py2 + 1)};
      bool overlaps = false;
      for (const auto& other : scene.annotations)
        if (box_iou(ann, other) >= 0.3) {
          overlaps = true;
          break;
        }
      if (overlaps) continue;

      for (int ch = 0; ch < 3; ++ch) {
        const double col = std::clamp(cls->color[static_cast<std::size_t>(ch)] * brightness, 0.0, 1.0);
        Scalar* plane = scene.image.data() +
                        static_cast<std::int64_t>(ch) * kImageSize * kImageSize;
        for (int py = py1; py <= py2; ++py)
          for (int px = px1; px <= px2; ++px) {
            const double a = cov[static_cast<std::size_t>(py) * kImageSize + px];
            if (a > 0) {
              Scalar& p = plane[static_cast<std::int64_t>(py) * kImageSize + px];
              p = (1.0 - a) * p + a * col;
            }
          }
      }
      scene.annotations.push_back(ann);
      break;  // placed; next object
    }
  }
  return scene;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag * 1000003ULL + index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scene scene_at(const std::vector<ShapeClass>& roster, std::uint64_t seed,
               std::uint64_t tag, std::uint64_t index, int must_include = -1) {
  const std::uint64_t s = mix_seed(seed, tag, index);
  Rng rng(s);
  Scene sc = generate_scene(roster, rng, must_include);
  sc.seed = s;
  return sc;
}

}  // namespace

DatasetSplit make_split(const std::vector<ShapeClass>& roster, int n_base,
                        int n_novel, const SplitCounts& counts,
                        std::uint64_t seed) {
  if (n_base + n_novel > static_cast<int>(roster.size()))
    throw std::invalid_argument("make_split: roster smaller than n_base + n_novel");
  if (n_base < 1 || n_novel < 0)
    throw std::invalid_argument("make_split: bad class counts");

  DatasetSplit ds;
  ds.roster = roster;
  ds.n_base = n_base;
  ds.n_novel = n_novel;
  const std::vector<ShapeClass> base_roster(roster.begin(), roster.begin() + n_base);
  const std::vector<ShapeClass> full_roster(roster.begin(),
                                            roster.begin() + n_base + n_novel);

  ds.base_train.reserve(static_cast<std::size_t>(counts.base_train));
  for (int i = 0; i < counts.base_train; ++i)
    ds.base_train.push_back(scene_at(base_roster, seed, 0, static_cast<std::uint64_t>(i)));
  ds.base_val.reserve(static_cast<std::size_t>(counts.base_val));
  for (int i = 0; i < counts.base_val; ++i)
    ds.base_val.push_back(scene_at(base_roster, seed, 1, static_cast<std::uint64_t>(i)));

  // Pool scene i guarantees an instance of novel class (i mod n_novel); the
  // rest of the scene is base-class clutter so supports are not toy images.
  ds.support_pool.reserve(static_cast<std::size_t>(counts.support_pool));
  for (int i = 0; i < counts.support_pool; ++i) {
    const int novel_id = n_novel > 0 ? n_base + (i % n_novel) : -1;
    ds.support_pool.push_back(
        scene_at(full_roster, seed, 2, static_cast<std::uint64_t>(i), novel_id));
  }

  ds.novel_test.reserve(static_cast<std::size_t>(counts.novel_test));
  for (int i = 0; i < counts.novel_test; ++i)
    ds.novel_test.push_back(scene_at(full_roster, seed, 3, static_cast<std::uint64_t>(i)));
  return ds;
}

std::vector<SupportSample> draw_support(const DatasetSplit& split, int class_id,
                                        int k_shot, int resample) {
  std::vector<SupportSample> out;
  int boxes = 0;
  const std::size_t n = split.support_pool.size();
  for (std::size_t step = 0; step < n && boxes < k_shot; ++step) {
    const Scene& sc =
        split.support_pool[(step + static_cast<std::size_t>(resample) * 7) % n];
    SupportSample sample{&sc, {}};
    for (const auto& b : sc.annotations)
      if (b.class_id == class_id && boxes < k_shot) {
        sample.boxes.push_back(b);
        ++boxes;
      }
    if (!sample.boxes.empty()) out.push_back(std::move(sample));
  }
  if (boxes < k_shot)
    throw std::runtime_error("draw_support: pool exhausted before k_shot boxes");
  return out;
}

}  // namespace incdet
