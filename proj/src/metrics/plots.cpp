#include "flowsr/metrics/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flowsr/core/errors.hpp"

namespace flowsr::metrics {

namespace {

constexpr int kWidth = 720, kHeight = 440;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void write_svg_line_plot(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series) {
  if (series.empty()) throw InputError("write_svg_line_plot: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty()) {
      throw InputError("write_svg_line_plot: malformed series " + s.label);
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double px = (kWidth - kMarginL - kMarginR) / (xmax - xmin);
  const double py = (kHeight - kMarginT - kMarginB) / (ymax - ymin);
  auto sx = [&](double x) { return kMarginL + (x - xmin) * px; };
  auto sy = [&](double y) { return kHeight - kMarginB - (y - ymin) * py; };

  std::ofstream os(path);
  if (!os) throw InputError("write_svg_line_plot: cannot open " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << title << "</text>\n";

  // axes
  os << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB << "\" x2=\""
     << kWidth - kMarginR << "\" y2=\"" << kHeight - kMarginB << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
     << "\" y2=\"" << kHeight - kMarginB << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << kHeight - kMarginB + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv) << "</text>\n";
    os << "<text x=\"" << kMarginL - 8 << "\" y=\"" << sy(yv) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
  }
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << kHeight / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << kHeight / 2
     << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kMarginR - 6 << "\" y=\"" << kMarginT + 16 * (si + 1)
       << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace flowsr::metrics
