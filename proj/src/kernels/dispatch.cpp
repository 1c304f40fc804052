#include <cstdlib>
#include <cstring>
#include <mutex>

#include "flowsr/kernels/kernels.hpp"

namespace flowsr::kernels {
namespace {

struct Tables {
  Ops<float> f{};
  Ops<double> d{};
  Backend backend = Backend::scalar;
};

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(FLOWSR_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(FLOWSR_HAVE_NEON)
      return true;  // baseline on aarch64
#else
      return false;
#endif
  }
  return false;
}

Backend pick_auto() {
#if defined(FLOWSR_HAVE_NEON)
  if (backend_available(Backend::neon)) return Backend::neon;
#endif
#if defined(FLOWSR_HAVE_AVX2)
  if (backend_available(Backend::avx2)) return Backend::avx2;
#endif
  return Backend::scalar;
}

void fill_tables(Tables& t, Backend b) {
  detail::scalar_fill_ops(t.f);
  detail::scalar_fill_ops(t.d);
  switch (b) {
    case Backend::scalar:
      break;
    case Backend::avx2:
#if defined(FLOWSR_HAVE_AVX2)
      detail::avx2_fill_ops(t.f);
      detail::avx2_fill_ops(t.d);
#endif
      break;
    case Backend::neon:
#if defined(FLOWSR_HAVE_NEON)
      detail::neon_fill_ops(t.f);
      detail::neon_fill_ops(t.d);
#endif
      break;
  }
  t.backend = b;
}

Tables& tables() {
  static Tables t;
  static std::once_flag once;
  std::call_once(once, [] {
    Backend b = pick_auto();
    if (const char* env = std::getenv("FLOWSR_KERNELS")) {
      if (std::strcmp(env, "scalar") == 0) {
        b = Backend::scalar;
      } else if (std::strcmp(env, "avx2") == 0 && backend_available(Backend::avx2)) {
        b = Backend::avx2;
      } else if (std::strcmp(env, "neon") == 0 && backend_available(Backend::neon)) {
        b = Backend::neon;
      }
      // anything else (incl. "auto") keeps the probed default
    }
    fill_tables(t, b);
  });
  return t;
}

}  // namespace

Backend active_backend() { return tables().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

const char* active_backend_name() { return backend_name(active_backend()); }

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  fill_tables(tables(), b);
  return true;
}

const Ops<float>& opsf() { return tables().f; }
const Ops<double>& opsd() { return tables().d; }

}  // namespace flowsr::kernels
