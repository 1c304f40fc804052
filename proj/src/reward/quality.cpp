#include "flowsr/reward/quality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace flowsr::reward {

namespace {

double mean_gradient_magnitude(const ImageF& img) {
  const int h = img.height(), w = img.width(), c = img.channels();
  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double gx = img.at(ch, y, x + 1) - img.at(ch, y, x);
        const double gy = img.at(ch, y + 1, x) - img.at(ch, y, x);
        total += std::sqrt(gx * gx + gy * gy);
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double median_abs_highpass(const ImageF& img) {
  const int h = img.height(), w = img.width(), c = img.channels();
  std::vector<double> residuals;
  residuals.reserve(img.size());
  auto clamp_idx = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double box = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            box += img.at(ch, clamp_idx(y + dy, h), clamp_idx(x + dx, w));
          }
        }
        residuals.push_back(std::abs(img.at(ch, y, x) - box / 9.0));
      }
    }
  }
  const std::size_t mid = residuals.size() / 2;
  std::nth_element(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(mid),
                   residuals.end());
  return residuals[mid];
}

// Mean absolute step across block-boundary-aligned adjacent pairs minus the
// same statistic off the boundaries, floored at zero. Columns and rows
// contribute symmetrically.
double boundary_excess(const ImageF& img, int block) {
  const int h = img.height(), w = img.width(), c = img.channels();
  double b_sum = 0.0, n_sum = 0.0;
  std::size_t b_cnt = 0, n_cnt = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double d = std::abs(img.at(ch, y, x + 1) - img.at(ch, y, x));
        if ((x + 1) % block == 0) {
          b_sum += d;
          ++b_cnt;
        } else {
          n_sum += d;
          ++n_cnt;
        }
      }
    }
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y + 1 < h; ++y) {
        const double d = std::abs(img.at(ch, y + 1, x) - img.at(ch, y, x));
        if ((y + 1) % block == 0) {
          b_sum += d;
          ++b_cnt;
        } else {
          n_sum += d;
          ++n_cnt;
        }
      }
    }
  }
  if (b_cnt == 0 || n_cnt == 0) return 0.0;
  return std::max(0.0, b_sum / static_cast<double>(b_cnt) - n_sum / static_cast<double>(n_cnt));
}

}  // namespace

QualityFeatures quality_features(const ImageF& img, int block_size) {
  QualityFeatures f;
  f.sharpness = mean_gradient_magnitude(img);
  f.noise = median_abs_highpass(img);
  f.blockiness = boundary_excess(img, block_size);
  return f;
}

double proxy_quality(const ImageF& img, const QualityConstants& k) {
  const QualityFeatures f = quality_features(img, k.block_size);
  const double z = k.a * f.sharpness - k.b * f.noise - k.c * f.blockiness + k.d;
  const double sig = 1.0 / (1.0 + std::exp(-z));
  return 1.0 + 4.0 * sig;
}

}  // namespace flowsr::reward
