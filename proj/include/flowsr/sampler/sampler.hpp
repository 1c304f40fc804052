#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowsr/core/errors.hpp"
#include "flowsr/core/image.hpp"
#include "flowsr/core/rng.hpp"
#include "flowsr/kernels/kernels.hpp"
#include "flowsr/model/velocity_model.hpp"

namespace flowsr::sampler {

struct SampleConfig {
  int steps = 6;  // rollout default; inference uses 40
  std::uint64_t seed = 0;
  double initial_noise_scale = 1.0;

  void validate() const {
    if (steps < 1) throw InputError("SampleConfig: steps must be >= 1");
    if (!(initial_noise_scale > 0.0)) {
      throw InputError("SampleConfig: initial_noise_scale must be > 0");
    }
  }
};

// Explicit Euler integration of dx/dt = -v from t=1 (seeded gaussian noise)
// down to t=0 on a uniform grid; v is evaluated at the left endpoint of each
// step. Deterministic in (velocity field, shape, cfg).
template <typename T, typename VelocityFn>
Image<T> integrate_euler(VelocityFn&& velocity, int h, int w, int c, const SampleConfig& cfg) {
  cfg.validate();
  Pcg32 noise_rng(derive_seed(cfg.seed, 0x4015e11ull));
  Image<T> x = gaussian_image<T>(h, w, c, noise_rng, cfg.initial_noise_scale);
  const double dt = 1.0 / cfg.steps;
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) * dt;
    const Image<T> v = velocity(x, t);
    require_same_shape(x, v, "integrate_euler");
    kernels::axpby(x.size(), T(1), x.data(), static_cast<T>(-dt), v.data(), x.data());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(static_cast<double>(x.data()[i]))) {
        throw NumericError("integrate_euler: non-finite state at step " + std::to_string(k) +
                           " (t=" + std::to_string(t) + ", seed " + std::to_string(cfg.seed) + ")");
      }
    }
  }
  return x;
}

// SR sample from the learned velocity field under the given conditioning.
template <typename T>
Image<T> sample(const model::VelocityModel<T>& m, const model::LowRankAdapter<T>* adapter,
                const model::ConditionTag<T>& cond, const SampleConfig& cfg) {
  const int h = cond.lr_image.height(), w = cond.lr_image.width(), c = cond.lr_image.channels();
  return integrate_euler<T>(
      [&](const Image<T>& x, double t) { return model::predict_velocity(m, adapter, x, t, cond); },
      h, w, c, cfg);
}

// K stochastic samples for one condition: identical configs except the noise
// seed, which runs seed+0 .. seed+K-1. Output order follows the seed index.
template <typename T>
std::vector<Image<T>> rollout_batch(const model::VelocityModel<T>& m,
                                    const model::LowRankAdapter<T>* adapter,
                                    const model::ConditionTag<T>& cond, int k_samples,
                                    const SampleConfig& cfg) {
  if (k_samples < 2) throw InputError("rollout_batch: groups need K >= 2");
  // adapter applied once up front; identical numerics to per-call application
  const model::VelocityModel<T>* policy = &m;
  model::VelocityModel<T> merged;
  if (adapter) {
    merged = model::merge_adapter(m, *adapter);
    policy = &merged;
  }
  std::vector<Image<T>> out;
  out.reserve(static_cast<std::size_t>(k_samples));
  for (int i = 0; i < k_samples; ++i) {
    SampleConfig c_i = cfg;
    c_i.seed = cfg.seed + static_cast<std::uint64_t>(i);
    out.push_back(sample<T>(*policy, nullptr, cond, c_i));
  }
  return out;
}

// Mean pairwise L2 distance inside a rollout group; the diversity statistic.
template <typename T>
double mean_pairwise_distance(const std::vector<Image<T>>& group) {
  if (group.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      total += std::sqrt(kernels::sum_sq_diff(group[i].size(), group[i].data(), group[j].data()));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace flowsr::sampler
