#pragma once

#include "flowsr/core/image.hpp"

namespace flowsr::reward {

// Structural-distance proxy D in [0,1] and fidelity F = 1 - D:
//
//   D = w * (1 - ssim(x, ref)) / 2  +  (1 - w) * min(1, gdist / g_norm)
//
// where gdist is the mean absolute difference between the gradient-magnitude
// maps of the two images. Defaults: w = 0.7, g_norm = 0.25. F(x, x) = 1.
struct FidelityConstants {
  double ssim_weight = 0.7;
  double grad_norm = 0.25;
};

double structural_distance(const ImageF& x, const ImageF& ref,
                           const FidelityConstants& k = FidelityConstants{});

double fidelity_from_reference(const ImageF& x_sr, const ImageF& x_ref,
                               const FidelityConstants& k = FidelityConstants{});

}  // namespace flowsr::reward
