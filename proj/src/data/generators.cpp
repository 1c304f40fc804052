#include "flowsr/data/generators.hpp"

#include <cmath>

#include "flowsr/core/errors.hpp"

namespace flowsr::data {

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "gradients") return GeneratorKind::gradients;
  if (name == "textures") return GeneratorKind::textures;
  if (name == "shapes") return GeneratorKind::shapes;
  if (name == "textlike") return GeneratorKind::textlike;
  throw InputError("unknown generator kind: " + name);
}

const char* generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::gradients:
      return "gradients";
    case GeneratorKind::textures:
      return "textures";
    case GeneratorKind::shapes:
      return "shapes";
    case GeneratorKind::textlike:
      return "textlike";
  }
  return "unknown";
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Smooth multi-ramp blends. Contrast stays high because the ramp endpoints
// are pushed toward the unit interval's ends.
void fill_gradients(ImageF& img, Pcg32& rng) {
  const int h = img.height(), w = img.width(), c = img.channels();
  for (int ch = 0; ch < c; ++ch) {
    const double angle = rng.next_double() * 2.0 * kPi;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double lo = 0.05 + 0.15 * rng.next_double();
    const double hi = 0.80 + 0.15 * rng.next_double();
    const double cx = rng.next_double(), cy = rng.next_double();
    const double radial_gain = 0.3 + 0.5 * rng.next_double();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w, v = (y + 0.5) / h;
        double t = 0.5 + 0.5 * ((u - 0.5) * dx + (v - 0.5) * dy) * 2.0;
        const double r = std::hypot(u - cx, v - cy);
        t = 0.7 * t + radial_gain * (1.0 - std::min(1.0, r));
        t = std::clamp(t, 0.0, 1.0);
        img.at(ch, y, x) = static_cast<float>(lo + (hi - lo) * t);
      }
    }
  }
}

// Band-limited sinusoid mixtures; range renormalized per channel.
void fill_textures(ImageF& img, Pcg32& rng) {
  const int h = img.height(), w = img.width(), c = img.channels();
  const int n_waves = 6;
  for (int ch = 0; ch < c; ++ch) {
    double fx[n_waves], fy[n_waves], ph[n_waves], amp[n_waves];
    for (int i = 0; i < n_waves; ++i) {
      // spatial frequencies between 1 and ~10 cycles per image
      fx[i] = (rng.next_double() * 9.0 + 1.0) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
      fy[i] = rng.next_double() * 9.0 + 1.0;
      ph[i] = rng.next_double() * 2.0 * kPi;
      amp[i] = 0.4 + 0.6 * rng.next_double();
    }
    double mn = 1e30, mx = -1e30;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w, v = (y + 0.5) / h;
        double s = 0.0;
        for (int i = 0; i < n_waves; ++i) {
          s += amp[i] * std::sin(2.0 * kPi * (fx[i] * u + fy[i] * v) + ph[i]);
        }
        img.at(ch, y, x) = static_cast<float>(s);
        mn = std::min(mn, s);
        mx = std::max(mx, s);
      }
    }
    const double span = (mx > mn) ? (mx - mn) : 1.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = (img.at(ch, y, x) - mn) / span;
        img.at(ch, y, x) = static_cast<float>(0.05 + 0.9 * s);
      }
    }
  }
}

// Flat background plus a handful of filled rectangles and disks with soft
// 1-pixel edges.
void fill_shapes(ImageF& img, Pcg32& rng) {
  const int h = img.height(), w = img.width(), c = img.channels();
  float bg[3];
  for (int ch = 0; ch < c; ++ch) bg[ch] = static_cast<float>(0.15 + 0.7 * rng.next_double());
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(ch, y, x) = bg[ch];
  }
  const int n_shapes = 5 + static_cast<int>(rng.next_below(5));
  for (int s = 0; s < n_shapes; ++s) {
    const bool disk = rng.next_double() < 0.5;
    const double cx = rng.next_double() * w, cy = rng.next_double() * h;
    const double rx = (0.08 + 0.22 * rng.next_double()) * w;
    const double ry = disk ? rx : (0.08 + 0.22 * rng.next_double()) * h;
    float color[3];
    for (int ch = 0; ch < c; ++ch) color[ch] = static_cast<float>(rng.next_double());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double cov;
        if (disk) {
          const double d = std::hypot((x + 0.5 - cx) / rx, (y + 0.5 - cy) / rx);
          cov = std::clamp((1.0 - d) * rx, 0.0, 1.0);
        } else {
          const double ex = rx - std::abs(x + 0.5 - cx);
          const double ey = ry - std::abs(y + 0.5 - cy);
          cov = std::clamp(std::min(ex, ey), 0.0, 1.0);
        }
        if (cov <= 0.0) continue;
        for (int ch = 0; ch < c; ++ch) {
          const float v = img.at(ch, y, x);
          img.at(ch, y, x) = static_cast<float>((1.0 - cov) * v + cov * color[ch]);
        }
      }
    }
  }
}

// Glyph-ish strokes on a light page: dark horizontal/vertical bars laid out
// in a cell grid, echoing document content.
void fill_textlike(ImageF& img, Pcg32& rng) {
  const int h = img.height(), w = img.width(), c = img.channels();
  const float page = static_cast<float>(0.82 + 0.13 * rng.next_double());
  const float ink = static_cast<float>(0.05 + 0.15 * rng.next_double());
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(ch, y, x) = page;
  }
  const int cell = std::max(6, h / 8);
  for (int cy = 0; cy + cell <= h; cy += cell) {
    for (int cx = 0; cx + cell <= w; cx += cell) {
      if (rng.next_double() < 0.25) continue;  // blank cell
      const int strokes = 1 + static_cast<int>(rng.next_below(3));
      for (int s = 0; s < strokes; ++s) {
        const bool horizontal = rng.next_double() < 0.5;
        const int thickness = 1 + static_cast<int>(rng.next_below(2));
        const int margin = 1;
        const int span = cell - 2 * margin;
        const int pos = margin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(
                                     std::max(1, span - thickness))));
        const int start = margin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(span / 2 + 1)));
        const int length = span - start;
        for (int i = 0; i < length; ++i) {
          for (int t = 0; t < thickness; ++t) {
            const int y = horizontal ? cy + pos + t : cy + start + i;
            const int x = horizontal ? cx + start + i : cx + pos + t;
            if (y < h && x < w) {
              for (int ch = 0; ch < c; ++ch) img.at(ch, y, x) = ink;
            }
          }
        }
      }
    }
  }
}

}  // namespace

ImageF generate_hr(GeneratorKind kind, int size, int channels, std::uint64_t seed) {
  if (size < 8) throw InputError("generate_hr: unsupported size " + std::to_string(size));
  ImageF img(size, size, channels);
  Pcg32 rng(derive_seed(seed, 0xda7a0001ull + static_cast<std::uint64_t>(kind)));
  switch (kind) {
    case GeneratorKind::gradients:
      fill_gradients(img, rng);
      break;
    case GeneratorKind::textures:
      fill_textures(img, rng);
      break;
    case GeneratorKind::shapes:
      fill_shapes(img, rng);
      break;
    case GeneratorKind::textlike:
      fill_textlike(img, rng);
      break;
  }
  return img;
}

}  // namespace flowsr::data
