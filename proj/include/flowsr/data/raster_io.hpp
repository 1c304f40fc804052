#pragma once

#include <filesystem>
#include <string>

#include "flowsr/core/image.hpp"

namespace flowsr::data {

// Lossless 8-bit raster storage: binary PGM (P5) for single-channel images,
// binary PPM (P6) for three channels, maxval 255.
//
// Quantization rule (the only lossy step, applied on write):
//   q = nearbyint(clamp(v, 0, 1) * 255)   -- round half to even
// Readback maps q -> q / 255.
std::filesystem::path write_raster(const ImageF& img, const std::filesystem::path& path);
ImageF read_raster(const std::filesystem::path& path);

// Quantize a single intensity with the documented rule.
unsigned char quantize8(float v);

}  // namespace flowsr::data
