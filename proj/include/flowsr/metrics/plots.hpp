#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace flowsr::metrics {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line plot (fixed canvas, auto-scaled axes, one polyline per
// series with a small legend).
void write_svg_line_plot(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series);

}  // namespace flowsr::metrics
