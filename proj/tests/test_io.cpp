#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "incdet/png_io.hpp"
#include "incdet/rng.hpp"
#include "incdet/svg_plot.hpp"
#include "incdet/synth.hpp"

using namespace incdet;

namespace {
std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Scene make_scene(std::uint64_t seed) {
  Rng rng(seed);
  return generate_scene(default_roster(), rng);
}
}  // namespace

TEST_CASE("png round trip preserves 8-bit quantized values") {
  Scene scene = make_scene(424242);
  const std::string path = tmp_path("incdet_io_roundtrip.png");
  write_png(path, scene.image);
  Tensor back = read_png(path);
  REQUIRE(back.shape() == scene.image.shape());
  // writer quantizes to 8 bits, so compare against the quantized original
  double max_err = 0.0;
  const auto& src = scene.image.data_vec();
  const auto& dst = back.data_vec();
  for (std::size_t i = 0; i < src.size(); ++i) {
    double v = src[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    const double q = std::round(v * 255.0) / 255.0;
    max_err = std::max(max_err, std::abs(dst[i] - q));
  }
  CHECK(max_err < 1e-9);
  std::remove(path.c_str());
}

TEST_CASE("png io rejects bad inputs") {
  CHECK_THROWS_AS(read_png(tmp_path("incdet_io_missing_file.png")),
                  std::runtime_error);
  Tensor flat = Tensor::zeros({3, 8});
  CHECK_THROWS(write_png(tmp_path("incdet_io_bad.png"), flat));
}

TEST_CASE("annotation draws boxes without touching the original") {
  Scene scene = make_scene(99);
  Tensor before = scene.image.clone();
  std::vector<Detection> dets;
  dets.push_back({/*class_id=*/0, /*score=*/0.87, 10.0, 12.0, 30.0, 34.0});
  dets.push_back({/*class_id=*/3, /*score=*/0.42, 40.0, 5.0, 60.0, 25.0});
  Tensor out = annotate_detections(scene.image, dets);
  REQUIRE(out.shape() == scene.image.shape());
  const auto& orig = scene.image.data_vec();
  for (std::size_t i = 0; i < orig.size(); ++i)
    CHECK(orig[i] == before.data_vec()[i]);
  double diff = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i)
    diff += std::abs(out.data_vec()[i] - orig[i]);
  CHECK(diff > 1.0);  // visible ink was laid down
  // out-of-frame boxes must not crash
  std::vector<Detection> wild;
  wild.push_back({1, 0.5, -20.0, -20.0, 200.0, 200.0});
  CHECK_NOTHROW(annotate_detections(scene.image, wild));
}

TEST_CASE("line chart svg carries the expected structure") {
  PlotSpec spec;
  spec.title = "ap vs classes <enrolled>";
  spec.x_label = "classes";
  spec.y_label = "ap";
  spec.series.push_back({"base", {0, 1, 2, 3}, {0.7, 0.7, 0.7, 0.7}});
  spec.series.push_back({"all", {0, 1, 2, 3}, {0.7, 0.65, 0.61, 0.58}});
  const std::string svg = line_chart_svg(spec);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find(">base</text>") != std::string::npos);
  CHECK(svg.find(">all</text>") != std::string::npos);
  CHECK(svg.find("&lt;enrolled&gt;") != std::string::npos);  // escaped title
  CHECK(svg.find("<enrolled>") == std::string::npos);

  const std::string path = tmp_path("incdet_io_plot.svg");
  save_svg(path, svg);
  CHECK(std::filesystem::file_size(path) == svg.size());
  std::remove(path.c_str());

  PlotSeries bad{"bad", {0, 1}, {0.5}};
  PlotSpec bad_spec;
  bad_spec.series.push_back(bad);
  CHECK_THROWS_AS(line_chart_svg(bad_spec), std::invalid_argument);
}

TEST_CASE("svg y range fits data when not pinned") {
  PlotSpec spec;
  spec.series.push_back({"s", {0, 1}, {100.0, 200.0}});
  const std::string svg = line_chart_svg(spec);
  // a fitted axis must label something near the data, not 0..1
  CHECK(svg.find(">100<") != std::string::npos);
}
