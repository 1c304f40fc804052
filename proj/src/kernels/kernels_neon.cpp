#if defined(FLOWSR_HAVE_NEON)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "flowsr/kernels/kernels.hpp"

// NEON kernels for aarch64. Float paths process 4 lanes, double paths 2.
// Same accumulation policy as the AVX2 backend: reductions widen to double.

namespace flowsr::kernels {
namespace {

inline double hsum_f64(float64x2_t v) { return vgetq_lane_f64(v, 0) + vgetq_lane_f64(v, 1); }

inline float64x2_t widen_lo(float32x4_t v) { return vcvt_f64_f32(vget_low_f32(v)); }
inline float64x2_t widen_hi(float32x4_t v) { return vcvt_f64_f32(vget_high_f32(v)); }

// --- float ---

void axpby_neon_f(std::size_t n, float a, const float* x, float b, const float* y, float* out) {
  const float32x4_t av = vdupq_n_f32(a);
  const float32x4_t bv = vdupq_n_f32(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const float32x4_t yv = vld1q_f32(y + i);
    vst1q_f32(out + i, vfmaq_f32(vmulq_f32(av, xv), bv, yv));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_add_neon_f(std::size_t n, float a, const float* x, float* inout) {
  const float32x4_t av = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(inout + i, vfmaq_f32(vld1q_f32(inout + i), av, vld1q_f32(x + i)));
  }
  for (; i < n; ++i) inout[i] += a * x[i];
}

double sum_neon_f(std::size_t n, const float* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    acc0 = vaddq_f64(acc0, widen_lo(v));
    acc1 = vaddq_f64(acc1, widen_hi(v));
  }
  double acc = hsum_f64(acc0) + hsum_f64(acc1);
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

double sum_sq_neon_f(std::size_t n, const float* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const float64x2_t lo = widen_lo(v);
    const float64x2_t hi = widen_hi(v);
    acc0 = vfmaq_f64(acc0, lo, lo);
    acc1 = vfmaq_f64(acc1, hi, hi);
  }
  double acc = hsum_f64(acc0) + hsum_f64(acc1);
  for (; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    acc += v * v;
  }
  return acc;
}

double sum_sq_diff_neon_f(std::size_t n, const float* x, const float* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const float32x4_t yv = vld1q_f32(y + i);
    const float64x2_t dlo = vsubq_f64(widen_lo(xv), widen_lo(yv));
    const float64x2_t dhi = vsubq_f64(widen_hi(xv), widen_hi(yv));
    acc0 = vfmaq_f64(acc0, dlo, dlo);
    acc1 = vfmaq_f64(acc1, dhi, dhi);
  }
  double acc = hsum_f64(acc0) + hsum_f64(acc1);
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc;
}

void softsign_neon_f(std::size_t n, const float* x, float* out) {
  const float32x4_t one = vdupq_n_f32(1.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    vst1q_f32(out + i, vdivq_f32(v, vaddq_f32(one, vabsq_f32(v))));
  }
  for (; i < n; ++i) out[i] = x[i] / (1.0f + std::abs(x[i]));
}

void softsign_grad_neon_f(std::size_t n, const float* x, const float* gout, float* gin) {
  const float32x4_t one = vdupq_n_f32(1.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const float32x4_t g = vld1q_f32(gout + i);
    const float32x4_t d = vaddq_f32(one, vabsq_f32(v));
    vst1q_f32(gin + i, vdivq_f32(g, vmulq_f32(d, d)));
  }
  for (; i < n; ++i) {
    const float d = 1.0f + std::abs(x[i]);
    gin[i] = gout[i] / (d * d);
  }
}

void conv3x3_acc_neon_f(int h, int w, const float* src, std::size_t src_stride, const float* k9,
                        float* dst) {
  float32x4_t k[9];
  for (int t = 0; t < 9; ++t) k[t] = vdupq_n_f32(k9[t]);
  for (int y = 0; y < h; ++y) {
    const float* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const float* r1 = r0 + src_stride;
    const float* r2 = r1 + src_stride;
    float* drow = dst + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 4 <= w; x += 4) {
      float32x4_t acc = vld1q_f32(drow + x);
      acc = vfmaq_f32(acc, k[0], vld1q_f32(r0 + x));
      acc = vfmaq_f32(acc, k[1], vld1q_f32(r0 + x + 1));
      acc = vfmaq_f32(acc, k[2], vld1q_f32(r0 + x + 2));
      acc = vfmaq_f32(acc, k[3], vld1q_f32(r1 + x));
      acc = vfmaq_f32(acc, k[4], vld1q_f32(r1 + x + 1));
      acc = vfmaq_f32(acc, k[5], vld1q_f32(r1 + x + 2));
      acc = vfmaq_f32(acc, k[6], vld1q_f32(r2 + x));
      acc = vfmaq_f32(acc, k[7], vld1q_f32(r2 + x + 1));
      acc = vfmaq_f32(acc, k[8], vld1q_f32(r2 + x + 2));
      vst1q_f32(drow + x, acc);
    }
    for (; x < w; ++x) {
      float acc = drow[x];
      acc += k9[0] * r0[x] + k9[1] * r0[x + 1] + k9[2] * r0[x + 2];
      acc += k9[3] * r1[x] + k9[4] * r1[x + 1] + k9[5] * r1[x + 2];
      acc += k9[6] * r2[x] + k9[7] * r2[x + 1] + k9[8] * r2[x + 2];
      drow[x] = acc;
    }
  }
}

void conv3x3_wgrad_neon_f(int h, int w, const float* src, std::size_t src_stride,
                          const float* gout, float* k9_acc) {
  double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    const float* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const float* r1 = r0 + src_stride;
    const float* r2 = r1 + src_stride;
    const float* grow = gout + static_cast<std::size_t>(y) * w;
    float32x4_t v[9];
    for (int t = 0; t < 9; ++t) v[t] = vdupq_n_f32(0.0f);
    int x = 0;
    for (; x + 4 <= w; x += 4) {
      const float32x4_t g = vld1q_f32(grow + x);
      v[0] = vfmaq_f32(v[0], g, vld1q_f32(r0 + x));
      v[1] = vfmaq_f32(v[1], g, vld1q_f32(r0 + x + 1));
      v[2] = vfmaq_f32(v[2], g, vld1q_f32(r0 + x + 2));
      v[3] = vfmaq_f32(v[3], g, vld1q_f32(r1 + x));
      v[4] = vfmaq_f32(v[4], g, vld1q_f32(r1 + x + 1));
      v[5] = vfmaq_f32(v[5], g, vld1q_f32(r1 + x + 2));
      v[6] = vfmaq_f32(v[6], g, vld1q_f32(r2 + x));
      v[7] = vfmaq_f32(v[7], g, vld1q_f32(r2 + x + 1));
      v[8] = vfmaq_f32(v[8], g, vld1q_f32(r2 + x + 2));
    }
    for (int t = 0; t < 9; ++t) {
      acc[t] += hsum_f64(vaddq_f64(widen_lo(v[t]), widen_hi(v[t])));
    }
    for (; x < w; ++x) {
      const double g = static_cast<double>(grow[x]);
      acc[0] += g * r0[x];
      acc[1] += g * r0[x + 1];
      acc[2] += g * r0[x + 2];
      acc[3] += g * r1[x];
      acc[4] += g * r1[x + 1];
      acc[5] += g * r1[x + 2];
      acc[6] += g * r2[x];
      acc[7] += g * r2[x + 1];
      acc[8] += g * r2[x + 2];
    }
  }
  for (int t = 0; t < 9; ++t) k9_acc[t] += static_cast<float>(acc[t]);
}

// --- double ---

void axpby_neon_d(std::size_t n, double a, const double* x, double b, const double* y,
                  double* out) {
  const float64x2_t av = vdupq_n_f64(a);
  const float64x2_t bv = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vfmaq_f64(vmulq_f64(av, vld1q_f64(x + i)), bv, vld1q_f64(y + i)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_add_neon_d(std::size_t n, double a, const double* x, double* inout) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(inout + i, vfmaq_f64(vld1q_f64(inout + i), av, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) inout[i] += a * x[i];
}

double sum_neon_d(std::size_t n, const double* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
  double acc = hsum_f64(acc0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_neon_d(std::size_t n, const double* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    acc0 = vfmaq_f64(acc0, v, v);
  }
  double acc = hsum_f64(acc0);
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sum_sq_diff_neon_d(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    acc0 = vfmaq_f64(acc0, d, d);
  }
  double acc = hsum_f64(acc0);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void softsign_neon_d(std::size_t n, const double* x, double* out) {
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    vst1q_f64(out + i, vdivq_f64(v, vaddq_f64(one, vabsq_f64(v))));
  }
  for (; i < n; ++i) out[i] = x[i] / (1.0 + std::abs(x[i]));
}

void softsign_grad_neon_d(std::size_t n, const double* x, const double* gout, double* gin) {
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const float64x2_t g = vld1q_f64(gout + i);
    const float64x2_t d = vaddq_f64(one, vabsq_f64(v));
    vst1q_f64(gin + i, vdivq_f64(g, vmulq_f64(d, d)));
  }
  for (; i < n; ++i) {
    const double d = 1.0 + std::abs(x[i]);
    gin[i] = gout[i] / (d * d);
  }
}

void conv3x3_acc_neon_d(int h, int w, const double* src, std::size_t src_stride, const double* k9,
                        double* dst) {
  float64x2_t k[9];
  for (int t = 0; t < 9; ++t) k[t] = vdupq_n_f64(k9[t]);
  for (int y = 0; y < h; ++y) {
    const double* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const double* r1 = r0 + src_stride;
    const double* r2 = r1 + src_stride;
    double* drow = dst + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 2 <= w; x += 2) {
      float64x2_t acc = vld1q_f64(drow + x);
      acc = vfmaq_f64(acc, k[0], vld1q_f64(r0 + x));
      acc = vfmaq_f64(acc, k[1], vld1q_f64(r0 + x + 1));
      acc = vfmaq_f64(acc, k[2], vld1q_f64(r0 + x + 2));
      acc = vfmaq_f64(acc, k[3], vld1q_f64(r1 + x));
      acc = vfmaq_f64(acc, k[4], vld1q_f64(r1 + x + 1));
      acc = vfmaq_f64(acc, k[5], vld1q_f64(r1 + x + 2));
      acc = vfmaq_f64(acc, k[6], vld1q_f64(r2 + x));
      acc = vfmaq_f64(acc, k[7], vld1q_f64(r2 + x + 1));
      acc = vfmaq_f64(acc, k[8], vld1q_f64(r2 + x + 2));
      vst1q_f64(drow + x, acc);
    }
    for (; x < w; ++x) {
      double acc = drow[x];
      acc += k9[0] * r0[x] + k9[1] * r0[x + 1] + k9[2] * r0[x + 2];
      acc += k9[3] * r1[x] + k9[4] * r1[x + 1] + k9[5] * r1[x + 2];
      acc += k9[6] * r2[x] + k9[7] * r2[x + 1] + k9[8] * r2[x + 2];
      drow[x] = acc;
    }
  }
}

void conv3x3_wgrad_neon_d(int h, int w, const double* src, std::size_t src_stride,
                          const double* gout, double* k9_acc) {
  float64x2_t v[9];
  for (int t = 0; t < 9; ++t) v[t] = vdupq_n_f64(0.0);
  double tail[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    const double* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const double* r1 = r0 + src_stride;
    const double* r2 = r1 + src_stride;
    const double* grow = gout + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 2 <= w; x += 2) {
      const float64x2_t g = vld1q_f64(grow + x);
      v[0] = vfmaq_f64(v[0], g, vld1q_f64(r0 + x));
      v[1] = vfmaq_f64(v[1], g, vld1q_f64(r0 + x + 1));
      v[2] = vfmaq_f64(v[2], g, vld1q_f64(r0 + x + 2));
      v[3] = vfmaq_f64(v[3], g, vld1q_f64(r1 + x));
      v[4] = vfmaq_f64(v[4], g, vld1q_f64(r1 + x + 1));
      v[5] = vfmaq_f64(v[5], g, vld1q_f64(r1 + x + 2));
      v[6] = vfmaq_f64(v[6], g, vld1q_f64(r2 + x));
      v[7] = vfmaq_f64(v[7], g, vld1q_f64(r2 + x + 1));
      v[8] = vfmaq_f64(v[8], g, vld1q_f64(r2 + x + 2));
    }
    for (; x < w; ++x) {
      const double g = grow[x];
      tail[0] += g * r0[x];
      tail[1] += g * r0[x + 1];
      tail[2] += g * r0[x + 2];
      tail[3] += g * r1[x];
      tail[4] += g * r1[x + 1];
      tail[5] += g * r1[x + 2];
      tail[6] += g * r2[x];
      tail[7] += g * r2[x + 1];
      tail[8] += g * r2[x + 2];
    }
  }
  for (int t = 0; t < 9; ++t) k9_acc[t] += hsum_f64(v[t]) + tail[t];
}

}  // namespace

namespace detail {

template <>
void neon_fill_ops<float>(Ops<float>& t) {
  t.axpby = &axpby_neon_f;
  t.scale_add = &scale_add_neon_f;
  t.sum = &sum_neon_f;
  t.sum_sq = &sum_sq_neon_f;
  t.sum_sq_diff = &sum_sq_diff_neon_f;
  t.softsign = &softsign_neon_f;
  t.softsign_grad = &softsign_grad_neon_f;
  t.conv3x3_acc = &conv3x3_acc_neon_f;
  t.conv3x3_wgrad = &conv3x3_wgrad_neon_f;
}

template <>
void neon_fill_ops<double>(Ops<double>& t) {
  t.axpby = &axpby_neon_d;
  t.scale_add = &scale_add_neon_d;
  t.sum = &sum_neon_d;
  t.sum_sq = &sum_sq_neon_d;
  t.sum_sq_diff = &sum_sq_diff_neon_d;
  t.softsign = &softsign_neon_d;
  t.softsign_grad = &softsign_grad_neon_d;
  t.conv3x3_acc = &conv3x3_acc_neon_d;
  t.conv3x3_wgrad = &conv3x3_wgrad_neon_d;
}

}  // namespace detail
}  // namespace flowsr::kernels

#endif  // FLOWSR_HAVE_NEON
