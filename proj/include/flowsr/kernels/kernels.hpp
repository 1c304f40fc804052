#pragma once

#include <cstddef>

// Data-parallel inner loops used by the model, trainers and samplers.
// Every op has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on aarch64) selected once at runtime. Variants are
// equivalence-tested against the scalar reference; within one process the
// selected backend is fixed, so runs stay deterministic.
//
// Reductions accumulate in double in all backends.

namespace flowsr::kernels {

enum class Backend { scalar, avx2, neon };

// Backend resolved at first use: FLOWSR_KERNELS env (scalar|avx2|neon|auto),
// then best available for the CPU.
Backend active_backend();
const char* backend_name(Backend b);
const char* active_backend_name();

// Force a specific backend (tests). Returns false if unavailable on this CPU.
bool set_backend(Backend b);

template <typename T>
struct Ops {
  // out[i] = a*x[i] + b*y[i]
  void (*axpby)(std::size_t n, T a, const T* x, T b, const T* y, T* out);
  // inout[i] += a*x[i]
  void (*scale_add)(std::size_t n, T a, const T* x, T* inout);
  double (*sum)(std::size_t n, const T* x);
  double (*sum_sq)(std::size_t n, const T* x);
  double (*sum_sq_diff)(std::size_t n, const T* x, const T* y);
  // out[i] = x[i] / (1 + |x[i]|)
  void (*softsign)(std::size_t n, const T* x, T* out);
  // gin[i] = gout[i] / (1 + |x[i]|)^2
  void (*softsign_grad)(std::size_t n, const T* x, const T* gout, T* gin);
  // dst[y*w+x] += sum_{ky,kx} k9[ky*3+kx] * src[(y+ky)*src_stride + (x+kx)]
  // src points at the top-left of a zero-padded plane, src_stride >= w+2.
  void (*conv3x3_acc)(int h, int w, const T* src, std::size_t src_stride, const T* k9, T* dst);
  // k9_acc[ky*3+kx] += sum_{y,x} src[(y+ky)*src_stride + (x+kx)] * gout[y*w+x]
  void (*conv3x3_wgrad)(int h, int w, const T* src, std::size_t src_stride, const T* gout,
                        T* k9_acc);
};

const Ops<float>& opsf();
const Ops<double>& opsd();

template <typename T>
const Ops<T>& ops() {
  if constexpr (sizeof(T) == sizeof(float)) {
    return reinterpret_cast<const Ops<T>&>(opsf());
  } else {
    return reinterpret_cast<const Ops<T>&>(opsd());
  }
}

template <typename T>
inline void axpby(std::size_t n, T a, const T* x, T b, const T* y, T* out) {
  ops<T>().axpby(n, a, x, b, y, out);
}
template <typename T>
inline void scale_add(std::size_t n, T a, const T* x, T* inout) {
  ops<T>().scale_add(n, a, x, inout);
}
template <typename T>
inline double sum(std::size_t n, const T* x) {
  return ops<T>().sum(n, x);
}
template <typename T>
inline double sum_sq(std::size_t n, const T* x) {
  return ops<T>().sum_sq(n, x);
}
template <typename T>
inline double sum_sq_diff(std::size_t n, const T* x, const T* y) {
  return ops<T>().sum_sq_diff(n, x, y);
}
template <typename T>
inline void softsign(std::size_t n, const T* x, T* out) {
  ops<T>().softsign(n, x, out);
}
template <typename T>
inline void softsign_grad(std::size_t n, const T* x, const T* gout, T* gin) {
  ops<T>().softsign_grad(n, x, gout, gin);
}
template <typename T>
inline void conv3x3_acc(int h, int w, const T* src, std::size_t src_stride, const T* k9, T* dst) {
  ops<T>().conv3x3_acc(h, w, src, src_stride, k9, dst);
}
template <typename T>
inline void conv3x3_wgrad(int h, int w, const T* src, std::size_t src_stride, const T* gout,
                          T* k9_acc) {
  ops<T>().conv3x3_wgrad(h, w, src, src_stride, gout, k9_acc);
}

namespace detail {
// Reference implementations, exported so equivalence tests can compare the
// dispatched backend against them directly.
template <typename T>
void scalar_fill_ops(Ops<T>& t);
#if defined(FLOWSR_HAVE_AVX2)
template <typename T>
void avx2_fill_ops(Ops<T>& t);
#endif
#if defined(FLOWSR_HAVE_NEON)
template <typename T>
void neon_fill_ops(Ops<T>& t);
#endif
}  // namespace detail

}  // namespace flowsr::kernels
