#if defined(FLOWSR_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "flowsr/kernels/kernels.hpp"

// AVX2/FMA kernels. Float paths process 8 lanes, double paths 4 lanes, with
// scalar remainder loops. Reductions widen to double before accumulating so
// they track the scalar reference closely; horizontal sums use a fixed lane
// order to keep results deterministic for a given backend.

namespace flowsr::kernels {
namespace {

inline double hsum256_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

// --- float ---

void axpby_avx2_f(std::size_t n, float a, const float* x, float b, const float* y, float* out) {
  const __m256 av = _mm256_set1_ps(a);
  const __m256 bv = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(bv, yv, _mm256_mul_ps(av, xv)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_add_avx2_f(std::size_t n, float a, const float* x, float* inout) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 io = _mm256_loadu_ps(inout + i);
    _mm256_storeu_ps(inout + i, _mm256_fmadd_ps(av, xv, io));
  }
  for (; i < n; ++i) inout[i] += a * x[i];
}

double sum_avx2_f(std::size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double acc = hsum256_pd(acc0) + hsum256_pd(acc1);
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

double sum_sq_avx2_f(std::size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  double acc = hsum256_pd(acc0) + hsum256_pd(acc1);
  for (; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    acc += v * v;
  }
  return acc;
}

double sum_sq_diff_avx2_f(std::size_t n, const float* x, const float* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    const __m256d dlo = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                      _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
    const __m256d dhi = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                      _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
    acc0 = _mm256_fmadd_pd(dlo, dlo, acc0);
    acc1 = _mm256_fmadd_pd(dhi, dhi, acc1);
  }
  double acc = hsum256_pd(acc0) + hsum256_pd(acc1);
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc;
}

void softsign_avx2_f(std::size_t n, const float* x, float* out) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 d = _mm256_add_ps(one, _mm256_and_ps(v, absmask));
    _mm256_storeu_ps(out + i, _mm256_div_ps(v, d));
  }
  for (; i < n; ++i) out[i] = x[i] / (1.0f + std::abs(x[i]));
}

void softsign_grad_avx2_f(std::size_t n, const float* x, const float* gout, float* gin) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 g = _mm256_loadu_ps(gout + i);
    const __m256 d = _mm256_add_ps(one, _mm256_and_ps(v, absmask));
    _mm256_storeu_ps(gin + i, _mm256_div_ps(g, _mm256_mul_ps(d, d)));
  }
  for (; i < n; ++i) {
    const float d = 1.0f + std::abs(x[i]);
    gin[i] = gout[i] / (d * d);
  }
}

void conv3x3_acc_avx2_f(int h, int w, const float* src, std::size_t src_stride, const float* k9,
                        float* dst) {
  const __m256 k0 = _mm256_set1_ps(k9[0]);
  const __m256 k1 = _mm256_set1_ps(k9[1]);
  const __m256 k2 = _mm256_set1_ps(k9[2]);
  const __m256 k3 = _mm256_set1_ps(k9[3]);
  const __m256 k4 = _mm256_set1_ps(k9[4]);
  const __m256 k5 = _mm256_set1_ps(k9[5]);
  const __m256 k6 = _mm256_set1_ps(k9[6]);
  const __m256 k7 = _mm256_set1_ps(k9[7]);
  const __m256 k8 = _mm256_set1_ps(k9[8]);
  for (int y = 0; y < h; ++y) {
    const float* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const float* r1 = r0 + src_stride;
    const float* r2 = r1 + src_stride;
    float* drow = dst + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 8 <= w; x += 8) {
      __m256 acc = _mm256_loadu_ps(drow + x);
      acc = _mm256_fmadd_ps(k0, _mm256_loadu_ps(r0 + x), acc);
      acc = _mm256_fmadd_ps(k1, _mm256_loadu_ps(r0 + x + 1), acc);
      acc = _mm256_fmadd_ps(k2, _mm256_loadu_ps(r0 + x + 2), acc);
      acc = _mm256_fmadd_ps(k3, _mm256_loadu_ps(r1 + x), acc);
      acc = _mm256_fmadd_ps(k4, _mm256_loadu_ps(r1 + x + 1), acc);
      acc = _mm256_fmadd_ps(k5, _mm256_loadu_ps(r1 + x + 2), acc);
      acc = _mm256_fmadd_ps(k6, _mm256_loadu_ps(r2 + x), acc);
      acc = _mm256_fmadd_ps(k7, _mm256_loadu_ps(r2 + x + 1), acc);
      acc = _mm256_fmadd_ps(k8, _mm256_loadu_ps(r2 + x + 2), acc);
      _mm256_storeu_ps(drow + x, acc);
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

void conv3x3_wgrad_avx2_f(int h, int w, const float* src, std::size_t src_stride,
                          const float* gout, float* k9_acc) {
  double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    const float* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const float* r1 = r0 + src_stride;
    const float* r2 = r1 + src_stride;
    const float* grow = gout + static_cast<std::size_t>(y) * w;
    __m256 v[9];
    for (int t = 0; t < 9; ++t) v[t] = _mm256_setzero_ps();
    int x = 0;
    for (; x + 8 <= w; x += 8) {
      const __m256 g = _mm256_loadu_ps(grow + x);
      v[0] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r0 + x), v[0]);
      v[1] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r0 + x + 1), v[1]);
      v[2] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r0 + x + 2), v[2]);
      v[3] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r1 + x), v[3]);
      v[4] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r1 + x + 1), v[4]);
      v[5] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r1 + x + 2), v[5]);
      v[6] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r2 + x), v[6]);
      v[7] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r2 + x + 1), v[7]);
      v[8] = _mm256_fmadd_ps(g, _mm256_loadu_ps(r2 + x + 2), v[8]);
    }
    // Flush per row: float accumulators only ever see one row of products.
    for (int t = 0; t < 9; ++t) {
      const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v[t]));
      const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v[t], 1));
      acc[t] += hsum256_pd(_mm256_add_pd(lo, hi));
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

void axpby_avx2_d(std::size_t n, double a, const double* x, double b, const double* y,
                  double* out) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d yv = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(bv, yv, _mm256_mul_pd(av, xv)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_add_avx2_d(std::size_t n, double a, const double* x, double* inout) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d io = _mm256_loadu_pd(inout + i);
    _mm256_storeu_pd(inout + i, _mm256_fmadd_pd(av, xv, io));
  }
  for (; i < n; ++i) inout[i] += a * x[i];
}

double sum_avx2_d(std::size_t n, const double* x) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double acc = hsum256_pd(acc0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_avx2_d(std::size_t n, const double* x) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc0 = _mm256_fmadd_pd(v, v, acc0);
  }
  double acc = hsum256_pd(acc0);
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sum_sq_diff_avx2_d(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double acc = hsum256_pd(acc0);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void softsign_avx2_d(std::size_t n, const double* x, double* out) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffll));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d d = _mm256_add_pd(one, _mm256_and_pd(v, absmask));
    _mm256_storeu_pd(out + i, _mm256_div_pd(v, d));
  }
  for (; i < n; ++i) out[i] = x[i] / (1.0 + std::abs(x[i]));
}

void softsign_grad_avx2_d(std::size_t n, const double* x, const double* gout, double* gin) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffll));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d g = _mm256_loadu_pd(gout + i);
    const __m256d d = _mm256_add_pd(one, _mm256_and_pd(v, absmask));
    _mm256_storeu_pd(gin + i, _mm256_div_pd(g, _mm256_mul_pd(d, d)));
  }
  for (; i < n; ++i) {
    const double d = 1.0 + std::abs(x[i]);
    gin[i] = gout[i] / (d * d);
  }
}

void conv3x3_acc_avx2_d(int h, int w, const double* src, std::size_t src_stride, const double* k9,
                        double* dst) {
  __m256d k[9];
  for (int t = 0; t < 9; ++t) k[t] = _mm256_set1_pd(k9[t]);
  for (int y = 0; y < h; ++y) {
    const double* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const double* r1 = r0 + src_stride;
    const double* r2 = r1 + src_stride;
    double* drow = dst + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 4 <= w; x += 4) {
      __m256d acc = _mm256_loadu_pd(drow + x);
      acc = _mm256_fmadd_pd(k[0], _mm256_loadu_pd(r0 + x), acc);
      acc = _mm256_fmadd_pd(k[1], _mm256_loadu_pd(r0 + x + 1), acc);
      acc = _mm256_fmadd_pd(k[2], _mm256_loadu_pd(r0 + x + 2), acc);
      acc = _mm256_fmadd_pd(k[3], _mm256_loadu_pd(r1 + x), acc);
      acc = _mm256_fmadd_pd(k[4], _mm256_loadu_pd(r1 + x + 1), acc);
      acc = _mm256_fmadd_pd(k[5], _mm256_loadu_pd(r1 + x + 2), acc);
      acc = _mm256_fmadd_pd(k[6], _mm256_loadu_pd(r2 + x), acc);
      acc = _mm256_fmadd_pd(k[7], _mm256_loadu_pd(r2 + x + 1), acc);
      acc = _mm256_fmadd_pd(k[8], _mm256_loadu_pd(r2 + x + 2), acc);
      _mm256_storeu_pd(drow + x, acc);
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

void conv3x3_wgrad_avx2_d(int h, int w, const double* src, std::size_t src_stride,
                          const double* gout, double* k9_acc) {
  __m256d v[9];
  for (int t = 0; t < 9; ++t) v[t] = _mm256_setzero_pd();
  double tail[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    const double* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const double* r1 = r0 + src_stride;
    const double* r2 = r1 + src_stride;
    const double* grow = gout + static_cast<std::size_t>(y) * w;
    int x = 0;
    for (; x + 4 <= w; x += 4) {
      const __m256d g = _mm256_loadu_pd(grow + x);
      v[0] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r0 + x), v[0]);
      v[1] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r0 + x + 1), v[1]);
      v[2] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r0 + x + 2), v[2]);
      v[3] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r1 + x), v[3]);
      v[4] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r1 + x + 1), v[4]);
      v[5] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r1 + x + 2), v[5]);
      v[6] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r2 + x), v[6]);
      v[7] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r2 + x + 1), v[7]);
      v[8] = _mm256_fmadd_pd(g, _mm256_loadu_pd(r2 + x + 2), v[8]);
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
  for (int t = 0; t < 9; ++t) k9_acc[t] += hsum256_pd(v[t]) + tail[t];
}

}  // namespace

namespace detail {

template <>
void avx2_fill_ops<float>(Ops<float>& t) {
  t.axpby = &axpby_avx2_f;
  t.scale_add = &scale_add_avx2_f;
  t.sum = &sum_avx2_f;
  t.sum_sq = &sum_sq_avx2_f;
  t.sum_sq_diff = &sum_sq_diff_avx2_f;
  t.softsign = &softsign_avx2_f;
  t.softsign_grad = &softsign_grad_avx2_f;
  t.conv3x3_acc = &conv3x3_acc_avx2_f;
  t.conv3x3_wgrad = &conv3x3_wgrad_avx2_f;
}

template <>
void avx2_fill_ops<double>(Ops<double>& t) {
  t.axpby = &axpby_avx2_d;
  t.scale_add = &scale_add_avx2_d;
  t.sum = &sum_avx2_d;
  t.sum_sq = &sum_sq_avx2_d;
  t.sum_sq_diff = &sum_sq_diff_avx2_d;
  t.softsign = &softsign_avx2_d;
  t.softsign_grad = &softsign_grad_avx2_d;
  t.conv3x3_acc = &conv3x3_acc_avx2_d;
  t.conv3x3_wgrad = &conv3x3_wgrad_avx2_d;
}

}  // namespace detail
}  // namespace flowsr::kernels

#endif  // FLOWSR_HAVE_AVX2
