#pragma once

#include <cmath>
#include <string>

#include "flowsr/core/errors.hpp"
#include "flowsr/core/image.hpp"
#include "flowsr/core/rng.hpp"
#include "flowsr/flow/flow_ops.hpp"
#include "flowsr/model/velocity_model.hpp"

namespace flowsr::rl {

// Negative-aware contrastive objective on the forward process. A rollout
// candidate x_sr is treated as pseudo-data: it is noised with the
// rectified-flow interpolation and the implicit positive/negative policies
//
//   v+ = (1 - lambda) v_old + lambda v_theta
//   v- = (1 + lambda) v_old - lambda v_theta
//
// are regressed against the target v = eps - x_sr:
//
//   loss = r * ||v+ - v||^2 + (1 - r) * ||v- - v||^2   (elementwise mean)

template <typename T>
struct NftPolicy {
  const model::VelocityModel<T>* params = nullptr;
  const model::LowRankAdapter<T>* adapter = nullptr;  // optional
};

// Deterministic core given the (t, eps) draw. Gradients flow only through
// v_theta; pass null grad sinks for loss-only evaluation.
template <typename T>
double nft_loss_at(const NftPolicy<T>& theta, const NftPolicy<T>& old_policy,
                   const Image<T>& x_sr, const model::ConditionTag<T>& cond, double r,
                   double lambda, double t, const Image<T>& eps,
                   model::ParamGrads<T>* base_grads, model::AdapterGrads<T>* adapter_grads) {
  if (!(r >= 0.0 && r <= 1.0)) throw InputError("nft_loss: r outside [0,1]");
  if (!(lambda > 0.0)) throw InputError("nft_loss: lambda must be > 0");

  const Image<T> x_t = flow::interpolate(x_sr, eps, t);
  const Image<T> v = flow::target_velocity(x_sr, eps);

  model::ForwardCache<T> cache;
  const Image<T> v_theta =
      model::forward_cached<T>(*theta.params, theta.adapter, x_t, t, cond, cache);
  const Image<T> v_old =
      model::predict_velocity<T>(*old_policy.params, old_policy.adapter, x_t, t, cond);

  const T lam = static_cast<T>(lambda);
  Image<T> v_pos = Image<T>::zeros_like(v_theta);
  kernels::axpby(v_pos.size(), static_cast<T>(1.0 - lambda), v_old.data(), lam, v_theta.data(),
                 v_pos.data());
  Image<T> v_neg = Image<T>::zeros_like(v_theta);
  kernels::axpby(v_neg.size(), static_cast<T>(1.0 + lambda), v_old.data(), -lam, v_theta.data(),
                 v_neg.data());

  const double loss = r * flow::mse(v_pos, v) + (1.0 - r) * flow::mse(v_neg, v);
  if (!std::isfinite(loss)) {
    throw NumericError("nft_loss: non-finite loss (r=" + std::to_string(r) +
                       ", t=" + std::to_string(t) + ")");
  }

  if (base_grads || adapter_grads) {
    // dL/dv_theta = 2 lambda [ r (v+ - v) - (1-r) (v- - v) ] / N
    const double inv_n = 1.0 / static_cast<double>(v.size());
    Image<T> gout = Image<T>::zeros_like(v_theta);
    const T cp = static_cast<T>(2.0 * lambda * r * inv_n);
    const T cn = static_cast<T>(2.0 * lambda * (1.0 - r) * inv_n);
    // gout = cp (v+ - v) - cn (v- - v)
    kernels::axpby(gout.size(), cp, v_pos.data(), -cn, v_neg.data(), gout.data());
    kernels::scale_add(gout.size(), static_cast<T>(cn - cp), v.data(), gout.data());
    model::backward<T>(*theta.params, theta.adapter, cache, gout, base_grads, adapter_grads);
  }
  return loss;
}

// (t, eps) draw for one candidate at one optimization step, keyed by the
// candidate's rollout seed so group losses are order-invariant.
template <typename T>
void nft_draw(std::uint64_t stage_seed, std::uint64_t candidate_seed, int opt_step, int h, int w,
              int c, double* t_out, Image<T>* eps_out) {
  Pcg32 rng(derive_seed(stage_seed, derive_seed(candidate_seed,
                                                0x0f7d0000ull + static_cast<std::uint64_t>(opt_step))));
  *t_out = rng.next_double();
  *eps_out = gaussian_image<T>(h, w, c, rng);
}

// Convenience wrapper used by the trainer: draws (t, eps) then evaluates.
template <typename T>
double nft_loss(const NftPolicy<T>& theta, const NftPolicy<T>& old_policy, const Image<T>& x_sr,
                const model::ConditionTag<T>& cond, double r, double lambda,
                std::uint64_t stage_seed, std::uint64_t candidate_seed, int opt_step,
                model::ParamGrads<T>* base_grads, model::AdapterGrads<T>* adapter_grads) {
  double t = 0.0;
  Image<T> eps;
  nft_draw<T>(stage_seed, candidate_seed, opt_step, x_sr.height(), x_sr.width(), x_sr.channels(),
              &t, &eps);
  return nft_loss_at<T>(theta, old_policy, x_sr, cond, r, lambda, t, eps, base_grads,
                        adapter_grads);
}

}  // namespace flowsr::rl
