/*
 * Copyright 2026 The mdda-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mdda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mdda::eval {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kPad = 48.0;
constexpr double kLegendWidth = 150.0;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr std::size_t kPaletteSize = std::size(kPalette);

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// Marker shapes cycle: circle, square, triangle, diamond, cross.
void marker(std::ostringstream& os, int shape, double x, double y, const char* colour) {
  const double r = 3.5;
  switch (shape % 5) {
    case 0:
      os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << colour
         << "\"/>";
      break;
    case 1:
      os << "<rect x=\"" << num(x - r) << "\" y=\"" << num(y - r) << "\" width=\"" << num(2 * r) << "\" height=\""
         << num(2 * r) << "\" fill=\"" << colour << "\"/>";
      break;
    case 2:
      os << "<polygon points=\"" << num(x) << ',' << num(y - r) << ' ' << num(x - r) << ',' << num(y + r) << ' '
         << num(x + r) << ',' << num(y + r) << "\" fill=\"" << colour << "\"/>";
      break;
    case 3:
      os << "<polygon points=\"" << num(x) << ',' << num(y - r) << ' ' << num(x + r) << ',' << num(y) << ' '
         << num(x) << ',' << num(y + r) << ' ' << num(x - r) << ',' << num(y) << "\" fill=\"" << colour << "\"/>";
      break;
    default:
      os << "<path d=\"M" << num(x - r) << ' ' << num(y - r) << " L" << num(x + r) << ' ' << num(y + r) << " M"
         << num(x - r) << ' ' << num(y + r) << " L" << num(x + r) << ' ' << num(y - r) << "\" stroke=\"" << colour
         << "\" stroke-width=\"1.5\" fill=\"none\"/>";
  }
  os << "\n";
}

struct Range {
  double lo, hi;
};

// 5% margin; a zero extent becomes +-1 around the value, no data gives [-1, 1].
Range pad_range(double lo, double hi) {
  if (lo > hi) return {-1.0, 1.0};
  if (hi - lo == 0.0) return {lo - 1.0, hi + 1.0};
  const double m = 0.05 * (hi - lo);
  return {lo - m, hi + m};
}

}  // namespace

std::string render_scatter(std::span<const ScatterSeries> series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  int max_label = -1;
  for (const auto& s : series) {
    if (s.points.rows() > 0 && s.points.cols() != 2)
      throw std::invalid_argument("eval: scatter series '" + s.domain + "' must have 2 columns, got " +
                                  std::to_string(s.points.cols()));
    if (static_cast<std::size_t>(s.points.rows()) != s.labels.size())
      throw std::invalid_argument("eval: scatter series '" + s.domain + "' has " + std::to_string(s.points.rows()) +
                                  " points but " + std::to_string(s.labels.size()) + " labels");
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      const double x = s.points(i, 0), y = s.points(i, 1);
      if (!std::isfinite(x) || !std::isfinite(y))
        throw std::invalid_argument("eval: scatter series '" + s.domain + "' has a non-finite point");
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
      if (s.labels[i] < 0) throw std::invalid_argument("eval: scatter labels must be non-negative");
      max_label = std::max(max_label, s.labels[i]);
    }
  }
  const Range xr = pad_range(xlo, xhi);
  const Range yr = pad_range(ylo, yhi);
  const double plot_w = kWidth - 2 * kPad - kLegendWidth;
  const double plot_h = kHeight - 2 * kPad;
  auto px = [&](double x) { return kPad + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto py = [&](double y) { return kPad + (yr.hi - y) / (yr.hi - yr.lo) * plot_h; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // Axes frame and extreme tick labels.
  os << "<g id=\"axes\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<rect x=\"" << num(kPad) << "\" y=\"" << num(kPad) << "\" width=\"" << num(plot_w) << "\" height=\""
     << num(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << num(kPad) << "\" y=\"" << num(kPad + plot_h + 14) << "\">" << num(xr.lo) << "</text>\n";
  os << "<text x=\"" << num(kPad + plot_w) << "\" y=\"" << num(kPad + plot_h + 14) << "\" text-anchor=\"end\">"
     << num(xr.hi) << "</text>\n";
  os << "<text x=\"" << num(kPad - 4) << "\" y=\"" << num(kPad + plot_h) << "\" text-anchor=\"end\">" << num(yr.lo)
     << "</text>\n";
  os << "<text x=\"" << num(kPad - 4) << "\" y=\"" << num(kPad + 10) << "\" text-anchor=\"end\">" << num(yr.hi)
     << "</text>\n";
  os << "</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<g class=\"series\" data-domain=\"" << escape(s.domain) << "\">\n";
    for (Eigen::Index i = 0; i < s.points.rows(); ++i)
      marker(os, static_cast<int>(k), px(s.points(i, 0)), py(s.points(i, 1)),
             kPalette[static_cast<std::size_t>(s.labels[i]) % kPaletteSize]);
    os << "</g>\n";
  }

  // Legend: one row per domain (shape), then one per class (colour).
  const double lx = kWidth - kLegendWidth - kPad / 2 + 12;
  double ly = kPad + 8;
  os << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t k = 0; k < series.size(); ++k, ly += 16) {
    marker(os, static_cast<int>(k), lx, ly - 4, "#333333");
    os << "<text x=\"" << num(lx + 10) << "\" y=\"" << num(ly) << "\">" << escape(series[k].domain) << "</text>\n";
  }
  ly += 6;
  for (int c = 0; c <= max_label; ++c, ly += 16) {
    os << "<rect x=\"" << num(lx - 4) << "\" y=\"" << num(ly - 8) << "\" width=\"8\" height=\"8\" fill=\""
       << kPalette[static_cast<std::size_t>(c) % kPaletteSize] << "\"/>\n";
    os << "<text x=\"" << num(lx + 10) << "\" y=\"" << num(ly) << "\">class " << c << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

void export_scatter(std::span<const ScatterSeries> series, const std::filesystem::path& path) {
  const std::string svg = render_scatter(series);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("eval: cannot write " + path.string());
  os << svg;
  if (!os) throw std::runtime_error("eval: write failed for " + path.string());
}

}  // namespace mdda::eval
