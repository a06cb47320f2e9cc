// SPDX-License-Identifier: Apache-2.0
#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace spikesal::cli {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string r;
  for (char c : s) {
    switch (c) {
      case '<': r += "&lt;"; break;
      case '>': r += "&gt;"; break;
      case '&': r += "&amp;"; break;
      case '"': r += "&quot;"; break;
      default: r += c;
    }
  }
  return r;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const char* colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

void header(std::ostringstream& s, const std::string& title) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
}

// Axis frame with five y ticks over [lo, hi].
void axes(std::ostringstream& s, double lo, double hi) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    s << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x0 << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

void legend(std::ostringstream& s, const std::vector<std::string>& names) {
  const double x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    s << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\"" << colour(i) << "\"/>\n";
    s << "<text x=\"" << x + 18 << "\" y=\"" << y + 1 << "\">" << escape(names[i]) << "</text>\n";
  }
}

// Padded range; a flat range is widened so it still draws.
std::pair<double, double> range(double lo, double hi, bool from_zero) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (from_zero) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = from_zero ? 0.0 : 0.05 * (hi - lo);
  return {lo - pad, hi + 0.05 * (hi - lo)};
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& se : series) {
    for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i) {
      if (!std::isfinite(se.y[i])) continue;
      xlo = std::min(xlo, se.x[i]);
      xhi = std::max(xhi, se.x[i]);
      ylo = std::min(ylo, se.y[i]);
      yhi = std::max(yhi, se.y[i]);
    }
  }
  const auto [y_lo, y_hi] = range(ylo, yhi, false);
  if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0;
  if (xhi - xlo < 1e-12) xhi = xlo + 1.0;

  std::ostringstream s;
  header(s, title);
  axes(s, y_lo, y_hi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](double x) { return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0); };
  auto py = [&](double y) { return y0 - (y - y_lo) / (y_hi - y_lo) * (y0 - y1); };
  s << "<text x=\"" << x0 << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">" << num(xlo) << "</text>\n";
  s << "<text x=\"" << x1 << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">" << num(xhi) << "</text>\n";
  s << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";

  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    names.push_back(se.name);
    s << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colour(k) << "\" points=\"";
    for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i) {
      if (std::isfinite(se.y[i])) s << px(se.x[i]) << ',' << py(se.y[i]) << ' ';
    }
    s << "\"/>\n";
  }
  legend(s, names);
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<BarGroup>& groups) {
  double hi = 0.0;
  for (const auto& g : groups) {
    for (double v : g.values) {
      if (std::isfinite(v)) hi = std::max(hi, v);
    }
  }
  const auto [y_lo, y_hi] = range(0.0, hi, true);

  std::ostringstream s;
  header(s, title);
  axes(s, y_lo, y_hi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double slot = groups.empty() ? 0.0 : (x1 - x0) / static_cast<double>(groups.size());
  const double bar = series_names.empty() ? 0.0 : 0.8 * slot / static_cast<double>(series_names.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = x0 + slot * static_cast<double>(g) + 0.1 * slot;
    for (std::size_t k = 0; k < groups[g].values.size() && k < series_names.size(); ++k) {
      const double v = std::isfinite(groups[g].values[k]) ? groups[g].values[k] : 0.0;
      const double h = (v - y_lo) / (y_hi - y_lo) * (y0 - y1);
      s << "<rect x=\"" << gx + bar * static_cast<double>(k) << "\" y=\"" << y0 - h << "\" width=\"" << bar
        << "\" height=\"" << h << "\" fill=\"" << colour(k) << "\"/>\n";
    }
    s << "<text x=\"" << gx + 0.4 * slot << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">"
      << escape(groups[g].label) << "</text>\n";
  }
  legend(s, series_names);
  s << "</svg>\n";
  return s.str();
}

}  // namespace spikesal::cli
