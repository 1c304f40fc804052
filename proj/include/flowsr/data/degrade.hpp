#pragma once

#include <cstdint>

#include "flowsr/core/image.hpp"
#include "flowsr/core/rng.hpp"

namespace flowsr::data {

// Single-pass degradation recipe applied in a fixed order:
//   gaussian blur -> area-average downsample -> additive gaussian noise
//   -> blockwise mean-flattening -> clamp to [0,1].
// Documented sampling ranges: blur_sigma in [0,3] px, noise_sigma in [0,0.2],
// downscale_factor in {1,2,4,8}, block_artifact_strength in [0,1].
struct DegradationSpec {
  double blur_sigma = 0.0;            // pixels; 0 skips the blur exactly
  double noise_sigma = 0.0;           // intensity units
  int downscale_factor = 4;           // positive integer
  double block_artifact_strength = 0.0;  // [0,1]; 0 is an exact no-op
  int block_size = 8;                 // block grid for the artifact proxy

  void validate() const;
};

// Gaussian blur with a truncated (radius = ceil(3*sigma)) separable kernel,
// clamp-to-edge borders. sigma == 0 returns the input unchanged.
ImageF gaussian_blur(const ImageF& img, double sigma);

// Box (area-average) downsampling by an integer factor.
ImageF downsample_area(const ImageF& img, int factor);

// Separable Catmull-Rom cubic upsampling by an integer factor, clamp-to-edge.
// factor == 1 is the identity.
ImageF upsample_cubic(const ImageF& img, int factor);

// Full degradation pipeline. Deterministic in (x_hr, spec, rng state).
ImageF degrade(const ImageF& x_hr, const DegradationSpec& spec, Pcg32& rng);

}  // namespace flowsr::data
