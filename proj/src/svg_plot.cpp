#include "incdet/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace incdet {
namespace {

constexpr const char* kSeriesColors[] = {"#d1495b", "#2e86ab", "#3caa56",
                                         "#e0a93e", "#8d5fb0", "#39b0a8"};

std::string fmt(double v) {
  std::ostringstream os;
  os << (std::abs(v) < 1e-12 ? 0.0 : v);
  return os.str();
}

// "nice" tick step covering the span with 4-8 ticks
double tick_step(double span) {
  if (span <= 0) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const PlotSpec& spec) {
  double x_lo = 0, x_hi = 1, y_lo = spec.y_lo, y_hi = spec.y_hi;
  bool have_pts = false;
  for (const auto& s : spec.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!have_pts) {
        x_lo = x_hi = s.x[i];
        if (spec.y_lo == spec.y_hi) y_lo = y_hi = s.y[i];
        have_pts = true;
      }
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      if (spec.y_lo == spec.y_hi) {
        y_lo = std::min(y_lo, s.y[i]);
        y_hi = std::max(y_hi, s.y[i]);
      }
    }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;

  const int w = spec.width, h = spec.height;
  const double ml = 62, mr = 16, mt = 34, mb = 46;  // margins
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto sx = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h
     << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"14\" fill=\"#222\">"
     << escape(spec.title) << "</text>\n";

  // gridlines + ticks
  const double ys = tick_step(y_hi - y_lo);
  for (double ty = std::ceil(y_lo / ys) * ys; ty <= y_hi + 1e-9; ty += ys) {
    os << "<line x1=\"" << ml << "\" y1=\"" << sy(ty) << "\" x2=\"" << ml + pw
       << "\" y2=\"" << sy(ty) << "\" stroke=\"#e5e5e5\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy(ty) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
          "fill=\"#555\">"
       << fmt(ty) << "</text>\n";
  }
  const double xs = tick_step(x_hi - x_lo);
  for (double tx = std::ceil(x_lo / xs) * xs; tx <= x_hi + 1e-9; tx += xs) {
    os << "<line x1=\"" << sx(tx) << "\" y1=\"" << mt + ph << "\" x2=\""
       << sx(tx) << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << sx(tx) << "\" y=\"" << mt + ph + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\" fill=\"#555\">"
       << fmt(tx) << "</text>\n";
  }
  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + ph << "\" stroke=\"#333\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\" fill=\"#333\">"
     << escape(spec.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "fill=\"#333\" transform=\"rotate(-90 14 "
     << mt + ph / 2 << ")\">" << escape(spec.y_label) << "</text>\n";

  // series
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("line_chart_svg: x/y length mismatch");
    const char* color = kSeriesColors[si % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i])
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    // legend entry
    const double lx = ml + pw - 150, ly = mt + 8 + 16.0 * si;
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 18
       << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 24 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">"
       << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void save_svg(const std::string& path, const std::string& svg_text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_svg: cannot open " + path);
  out << svg_text;
  if (!out) throw std::runtime_error("save_svg: write failed for " + path);
}

}  // namespace incdet
