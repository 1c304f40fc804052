#include "flowsr/reward/fidelity.hpp"

#include <algorithm>
#include <cmath>

#include "flowsr/core/errors.hpp"
#include "flowsr/metrics/metrics.hpp"

namespace flowsr::reward {

namespace {

double gradient_map_distance(const ImageF& a, const ImageF& b) {
  const int h = a.height(), w = a.width(), c = a.channels();
  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double gax = a.at(ch, y, x + 1) - a.at(ch, y, x);
        const double gay = a.at(ch, y + 1, x) - a.at(ch, y, x);
        const double gbx = b.at(ch, y, x + 1) - b.at(ch, y, x);
        const double gby = b.at(ch, y + 1, x) - b.at(ch, y, x);
        total += std::abs(std::sqrt(gax * gax + gay * gay) - std::sqrt(gbx * gbx + gby * gby));
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

double structural_distance(const ImageF& x, const ImageF& ref, const FidelityConstants& k) {
  require_same_shape(x, ref, "structural_distance");
  // ssim is in [-1,1]; (1 - ssim)/2 rescales to [0,1]
  const double ssim_term = std::clamp((1.0 - metrics::ssim(x, ref)) / 2.0, 0.0, 1.0);
  const double grad_term = std::min(1.0, gradient_map_distance(x, ref) / k.grad_norm);
  return k.ssim_weight * ssim_term + (1.0 - k.ssim_weight) * grad_term;
}

double fidelity_from_reference(const ImageF& x_sr, const ImageF& x_ref,
                               const FidelityConstants& k) {
  return 1.0 - structural_distance(x_sr, x_ref, k);
}

}  // namespace flowsr::reward
