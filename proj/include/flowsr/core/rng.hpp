#pragma once

#include <cmath>
#include <cstdint>

#include "flowsr/core/image.hpp"

namespace flowsr {

// splitmix64 finalizer; used both as a stream mixer and a seed deriver so
// that every artifact is a pure function of (master seed, tag chain).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(base ^ mix64(tag));
}

// Minimal PCG32 (O'Neill). Self-contained so random streams are bitwise
// reproducible across platforms and compilers, unlike <random> distributions.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0x853c49e6748fea9bull) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    const std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  // Uniform in [0,1) with 32 bits of resolution.
  double next_double() {
    return static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
  }

  // Uniform in (0,1]; safe input for log().
  double next_double_open() {
    return (static_cast<double>(next_u32()) + 1.0) * (1.0 / 4294967296.0);
  }

  std::uint32_t next_below(std::uint32_t bound) {
    // Lemire-style rejection-free enough for non-crypto use; keep it simple
    // and unbiased via rejection on the threshold.
    const std::uint32_t threshold = (-bound) % bound;
    for (;;) {
      const std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller with one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
Image<T> gaussian_image(int h, int w, int c, Pcg32& rng, double scale = 1.0) {
  Image<T> out(h, w, c);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = static_cast<T>(scale * rng.normal());
  }
  return out;
}

}  // namespace flowsr
