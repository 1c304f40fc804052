#pragma once

#include "flowsr/core/errors.hpp"
#include "flowsr/core/image.hpp"
#include "flowsr/kernels/kernels.hpp"

namespace flowsr::flow {

// Rectified-flow construction: x_t = (1-t) x + t eps, target v = eps - x.

template <typename T>
struct FlowSample {
  Image<T> x_t;
  Image<T> v_target;
  double t = 0.0;
};

template <typename T>
Image<T> interpolate(const Image<T>& x, const Image<T>& eps, double t) {
  require_same_shape(x, eps, "interpolate");
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("interpolate: t outside [0,1]");
  Image<T> out = Image<T>::zeros_like(x);
  kernels::axpby(x.size(), static_cast<T>(1.0 - t), x.data(), static_cast<T>(t), eps.data(),
                 out.data());
  return out;
}

template <typename T>
Image<T> target_velocity(const Image<T>& x, const Image<T>& eps) {
  require_same_shape(x, eps, "target_velocity");
  Image<T> out = Image<T>::zeros_like(x);
  kernels::axpby(x.size(), T(-1), x.data(), T(1), eps.data(), out.data());
  return out;
}

template <typename T>
FlowSample<T> make_flow_sample(const Image<T>& x, const Image<T>& eps, double t) {
  FlowSample<T> s;
  s.x_t = interpolate(x, eps, t);
  s.v_target = target_velocity(x, eps);
  s.t = t;
  return s;
}

// Mean squared elementwise difference; the norm convention for all losses.
template <typename T>
double mse(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "mse");
  return kernels::sum_sq_diff(a.size(), a.data(), b.data()) / static_cast<double>(a.size());
}

}  // namespace flowsr::flow
