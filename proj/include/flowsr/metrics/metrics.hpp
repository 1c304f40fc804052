#pragma once

#include "flowsr/core/image.hpp"

namespace flowsr::metrics {

// 10*log10(1/MSE) for unit-range images; +infinity when MSE == 0.
double psnr(const ImageF& x, const ImageF& y);

// Mean local structural similarity over a uniform 7x7 window at every fully
// contained position, computed per channel and averaged across channels.
// Stabilizers C1=(0.01)^2, C2=(0.03)^2 for unit dynamic range.
double ssim(const ImageF& x, const ImageF& y);

}  // namespace flowsr::metrics
