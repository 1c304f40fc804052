#include <cmath>
#include <cstddef>

#include "flowsr/kernels/kernels.hpp"

// Scalar reference kernels. These define the semantics; the SIMD variants
// must agree with them within floating-point reassociation tolerance.

namespace flowsr::kernels {
namespace {

template <typename T>
void axpby_scalar(std::size_t n, T a, const T* x, T b, const T* y, T* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a * x[i] + b * y[i];
  }
}

template <typename T>
void scale_add_scalar(std::size_t n, T a, const T* x, T* inout) {
  for (std::size_t i = 0; i < n; ++i) {
    inout[i] += a * x[i];
  }
}

template <typename T>
double sum_scalar(std::size_t n, const T* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename T>
double sum_sq_scalar(std::size_t n, const T* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    acc += v * v;
  }
  return acc;
}

template <typename T>
double sum_sq_diff_scalar(std::size_t n, const T* x, const T* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc;
}

template <typename T>
void softsign_scalar(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] / (T(1) + std::abs(x[i]));
  }
}

template <typename T>
void softsign_grad_scalar(std::size_t n, const T* x, const T* gout, T* gin) {
  for (std::size_t i = 0; i < n; ++i) {
    const T d = T(1) + std::abs(x[i]);
    gin[i] = gout[i] / (d * d);
  }
}

template <typename T>
void conv3x3_acc_scalar(int h, int w, const T* src, std::size_t src_stride, const T* k9, T* dst) {
  for (int y = 0; y < h; ++y) {
    const T* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const T* r1 = r0 + src_stride;
    const T* r2 = r1 + src_stride;
    T* drow = dst + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      T acc = drow[x];
      acc += k9[0] * r0[x] + k9[1] * r0[x + 1] + k9[2] * r0[x + 2];
      acc += k9[3] * r1[x] + k9[4] * r1[x + 1] + k9[5] * r1[x + 2];
      acc += k9[6] * r2[x] + k9[7] * r2[x + 1] + k9[8] * r2[x + 2];
      drow[x] = acc;
    }
  }
}

template <typename T>
void conv3x3_wgrad_scalar(int h, int w, const T* src, std::size_t src_stride, const T* gout,
                          T* k9_acc) {
  double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    const T* r0 = src + static_cast<std::size_t>(y) * src_stride;
    const T* r1 = r0 + src_stride;
    const T* r2 = r1 + src_stride;
    const T* grow = gout + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
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
  for (int i = 0; i < 9; ++i) k9_acc[i] += static_cast<T>(acc[i]);
}

}  // namespace

namespace detail {

template <typename T>
void scalar_fill_ops(Ops<T>& t) {
  t.axpby = &axpby_scalar<T>;
  t.scale_add = &scale_add_scalar<T>;
  t.sum = &sum_scalar<T>;
  t.sum_sq = &sum_sq_scalar<T>;
  t.sum_sq_diff = &sum_sq_diff_scalar<T>;
  t.softsign = &softsign_scalar<T>;
  t.softsign_grad = &softsign_grad_scalar<T>;
  t.conv3x3_acc = &conv3x3_acc_scalar<T>;
  t.conv3x3_wgrad = &conv3x3_wgrad_scalar<T>;
}

template void scalar_fill_ops<float>(Ops<float>&);
template void scalar_fill_ops<double>(Ops<double>&);

}  // namespace detail
}  // namespace flowsr::kernels
