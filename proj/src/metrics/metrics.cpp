#include "flowsr/metrics/metrics.hpp"

#include <cmath>
#include <limits>

#include "flowsr/core/errors.hpp"

namespace flowsr::metrics {

double psnr(const ImageF& x, const ImageF& y) {
  require_same_shape(x, y, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x.data()[i]) - static_cast<double>(y.data()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWindow = 7;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_channel(const ImageF& x, const ImageF& y, int ch) {
  const int h = x.height(), w = x.width();
  const double inv_n = 1.0 / (kWindow * kWindow);
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + kWindow <= h; ++y0) {
    for (int x0 = 0; x0 + kWindow <= w; ++x0) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int dy = 0; dy < kWindow; ++dy) {
        for (int dx = 0; dx < kWindow; ++dx) {
          const double a = x.at(ch, y0 + dy, x0 + dx);
          const double b = y.at(ch, y0 + dy, x0 + dx);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double mx = sx * inv_n, my = sy * inv_n;
      const double vx = sxx * inv_n - mx * mx;
      const double vy = syy * inv_n - my * my;
      const double cxy = sxy * inv_n - mx * my;
      const double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
      const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

double ssim(const ImageF& x, const ImageF& y) {
  require_same_shape(x, y, "ssim");
  if (x.height() < kWindow || x.width() < kWindow) {
    throw InputError("ssim: image smaller than the 7x7 window");
  }
  double total = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) total += ssim_channel(x, y, ch);
  return total / x.channels();
}

}  // namespace flowsr::metrics
