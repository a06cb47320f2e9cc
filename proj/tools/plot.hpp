// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal static SVG charts for training curves and per-class ratios.

#include <string>
#include <vector>

namespace spikesal::cli {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series
};

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<BarGroup>& groups);

}  // namespace spikesal::cli
