#pragma once

#include <string>
#include <vector>

namespace incdet {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // same length as x
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  // Explicit y range; when lo == hi the range is fitted to the data.
  double y_lo = 0.0, y_hi = 0.0;
  int width = 560, height = 360;
};

// Self-contained line chart with axes, ticks, markers and a legend. Returns
// the complete SVG document text.
std::string line_chart_svg(const PlotSpec& spec);

void save_svg(const std::string& path, const std::string& svg_text);

}  // namespace incdet
