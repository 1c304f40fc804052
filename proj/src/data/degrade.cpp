#include "flowsr/data/degrade.hpp"

#include <cmath>
#include <vector>

#include "flowsr/core/errors.hpp"

namespace flowsr::data {

void DegradationSpec::validate() const {
  if (blur_sigma < 0.0 || blur_sigma > 3.0) throw InputError("DegradationSpec: blur_sigma out of [0,3]");
  if (noise_sigma < 0.0 || noise_sigma > 0.2) throw InputError("DegradationSpec: noise_sigma out of [0,0.2]");
  if (downscale_factor != 1 && downscale_factor != 2 && downscale_factor != 4 &&
      downscale_factor != 8) {
    throw InputError("DegradationSpec: downscale_factor must be one of {1,2,4,8}");
  }
  if (block_artifact_strength < 0.0 || block_artifact_strength > 1.0) {
    throw InputError("DegradationSpec: block_artifact_strength out of [0,1]");
  }
  if (block_size < 2) throw InputError("DegradationSpec: block_size must be >= 2");
}

namespace {

inline int clamp_idx(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

void blur_axis(const ImageF& src, ImageF& dst, const std::vector<double>& taps, bool horizontal) {
  const int h = src.height(), w = src.width(), c = src.channels();
  const int radius = static_cast<int>(taps.size()) / 2;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int yy = horizontal ? y : clamp_idx(y + t, h);
          const int xx = horizontal ? clamp_idx(x + t, w) : x;
          acc += taps[static_cast<std::size_t>(t + radius)] * src.at(ch, yy, xx);
        }
        dst.at(ch, y, x) = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (sigma == 0.0) return img;
  if (sigma < 0.0) throw InputError("gaussian_blur: negative sigma");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * (t / sigma) * (t / sigma));
    taps[static_cast<std::size_t>(t + radius)] = v;
    norm += v;
  }
  for (auto& v : taps) v /= norm;
  ImageF tmp(img.height(), img.width(), img.channels());
  ImageF out(img.height(), img.width(), img.channels());
  blur_axis(img, tmp, taps, /*horizontal=*/true);
  blur_axis(tmp, out, taps, /*horizontal=*/false);
  return out;
}

ImageF downsample_area(const ImageF& img, int factor) {
  if (factor < 1) throw InputError("downsample_area: factor must be >= 1");
  if (factor == 1) return img;
  if (img.height() % factor != 0 || img.width() % factor != 0) {
    throw InputError("downsample_area: size not divisible by factor");
  }
  const int oh = img.height() / factor, ow = img.width() / factor, c = img.channels();
  ImageF out(oh, ow, c);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            acc += img.at(ch, y * factor + dy, x * factor + dx);
          }
        }
        out.at(ch, y, x) = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

namespace {

// Catmull-Rom weights for fractional offset t in [0,1).
inline void cubic_weights(double t, double w[4]) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

}  // namespace

ImageF upsample_cubic(const ImageF& img, int factor) {
  if (factor < 1) throw InputError("upsample_cubic: factor must be >= 1");
  if (factor == 1) return img;
  const int h = img.height(), w = img.width(), c = img.channels();
  const int oh = h * factor, ow = w * factor;

  // precompute per-phase weights and source offsets
  std::vector<double> wts(static_cast<std::size_t>(factor) * 4);
  std::vector<int> base(static_cast<std::size_t>(factor));
  for (int p = 0; p < factor; ++p) {
    // output sample p maps to source coordinate (p + 0.5)/factor - 0.5
    const double sc = (p + 0.5) / factor - 0.5;
    const int fl = static_cast<int>(std::floor(sc));
    base[static_cast<std::size_t>(p)] = fl;
    cubic_weights(sc - fl, &wts[static_cast<std::size_t>(p) * 4]);
  }

  ImageF mid(h, ow, c);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int ox = 0; ox < ow; ++ox) {
        const int p = ox % factor;
        const int bx = ox / factor + base[static_cast<std::size_t>(p)];
        const double* wt = &wts[static_cast<std::size_t>(p) * 4];
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += wt[k] * img.at(ch, y, clamp_idx(bx - 1 + k, w));
        mid.at(ch, y, ox) = static_cast<float>(acc);
      }
    }
  }
  ImageF out(oh, ow, c);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      const int p = oy % factor;
      const int by = oy / factor + base[static_cast<std::size_t>(p)];
      const double* wt = &wts[static_cast<std::size_t>(p) * 4];
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += wt[k] * mid.at(ch, clamp_idx(by - 1 + k, h), ox);
        out.at(ch, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageF degrade(const ImageF& x_hr, const DegradationSpec& spec, Pcg32& rng) {
  spec.validate();
  if (x_hr.height() % spec.downscale_factor != 0 || x_hr.width() % spec.downscale_factor != 0) {
    throw InputError("degrade: HR size not divisible by downscale factor");
  }

  ImageF lr = downsample_area(gaussian_blur(x_hr, spec.blur_sigma), spec.downscale_factor);

  if (spec.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < lr.size(); ++i) {
      lr.data()[i] += static_cast<float>(spec.noise_sigma * rng.normal());
    }
  }

  if (spec.block_artifact_strength > 0.0) {
    const int h = lr.height(), w = lr.width(), c = lr.channels();
    const int b = spec.block_size;
    const float s = static_cast<float>(spec.block_artifact_strength);
    for (int ch = 0; ch < c; ++ch) {
      for (int by = 0; by < h; by += b) {
        for (int bx = 0; bx < w; bx += b) {
          const int ey = std::min(by + b, h), ex = std::min(bx + b, w);
          double mean = 0.0;
          int count = 0;
          for (int y = by; y < ey; ++y)
            for (int x = bx; x < ex; ++x) {
              mean += lr.at(ch, y, x);
              ++count;
            }
          mean /= count;
          for (int y = by; y < ey; ++y) {
            for (int x = bx; x < ex; ++x) {
              const float v = lr.at(ch, y, x);
              lr.at(ch, y, x) = (1.0f - s) * v + s * static_cast<float>(mean);
            }
          }
        }
      }
    }
  }

  return clamped01(lr);
}

}  // namespace flowsr::data
