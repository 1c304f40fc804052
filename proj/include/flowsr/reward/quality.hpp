#pragma once

#include "flowsr/core/image.hpp"

namespace flowsr::reward {

// No-reference quality proxy mapping an image to [1,5]:
//
//   Q = 1 + 4 * logistic(a*sharpness - b*noise - c*blockiness + d)
//
//   sharpness  = mean forward-difference gradient magnitude
//   noise      = median absolute 3x3-highpass residual
//   blockiness = block-boundary discontinuity excess over the off-boundary
//                baseline (columns and rows, block grid `block_size`)
//
// The constants were fixed by a coarse grid search maximizing the separation
// between clean procedural images and their degraded versions; see the
// calibration test in tests/test_reward.cpp for the acceptance property.
struct QualityConstants {
  double a = 50.0;
  double b = 160.0;
  double c = 20.0;
  double d = -0.5;
  int block_size = 8;
};

struct QualityFeatures {
  double sharpness = 0.0;
  double noise = 0.0;
  double blockiness = 0.0;
};

QualityFeatures quality_features(const ImageF& img, int block_size);

// Deterministic, total on valid images; range (1,5).
double proxy_quality(const ImageF& img, const QualityConstants& k = QualityConstants{});

}  // namespace flowsr::reward
