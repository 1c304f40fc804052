#include "flowsr/reward/composite.hpp"

#include <cmath>

#include "flowsr/core/errors.hpp"
#include "flowsr/data/degrade.hpp"

namespace flowsr::reward {

double compass_reward(double fidelity, double q_lr, double q_sr, double gamma) {
  if (!(fidelity >= 0.0 && fidelity <= 1.0)) {
    throw InputError("compass_reward: fidelity outside [0,1]");
  }
  if (!(q_lr >= 1.0 && q_lr <= 5.0) || !(q_sr >= 1.0 && q_sr <= 5.0)) {
    throw InputError("compass_reward: quality scores outside [1,5]");
  }
  if (!(gamma > 0.0)) throw InputError("compass_reward: gamma must be > 0");
  // std::pow(0, positive) == 0 and q_lr/gamma > 0 on this domain, so zero
  // fidelity annihilates both terms
  return fidelity * q_lr + std::pow(fidelity, q_lr / gamma) * (q_sr - q_lr);
}

RewardFormulation reward_formulation_from_string(const std::string& name) {
  if (name == "gain_only") return RewardFormulation::gain_only;
  if (name == "gated_gain") return RewardFormulation::gated_gain;
  if (name == "full") return RewardFormulation::full;
  throw InputError("unknown reward formulation: " + name);
}

const char* reward_formulation_name(RewardFormulation f) {
  switch (f) {
    case RewardFormulation::gain_only:
      return "gain_only";
    case RewardFormulation::gated_gain:
      return "gated_gain";
    case RewardFormulation::full:
      return "full";
  }
  return "unknown";
}

RewardFn reward_formulation_variant(RewardFormulation kind, double gamma) {
  switch (kind) {
    case RewardFormulation::gain_only:
      return [](double, double q_lr, double q_sr) { return q_sr - q_lr; };
    case RewardFormulation::gated_gain:
      return [gamma](double f, double q_lr, double q_sr) {
        return std::pow(f, q_lr / gamma) * (q_sr - q_lr);
      };
    case RewardFormulation::full:
      return [gamma](double f, double q_lr, double q_sr) {
        return compass_reward(f, q_lr, q_sr, gamma);
      };
  }
  throw InputError("reward_formulation_variant: bad kind");
}

RewardBreakdown compass_evaluate(const ImageF& x_lr, const ImageF& x_sr, const ImageF* x_gt,
                                 const ScorerInterface& scorer, double gamma, FidelityMode mode) {
  RewardBreakdown out;
  out.q_lr = scorer.quality(x_lr);
  out.q_sr = scorer.quality(x_sr);
  out.delta_q = out.q_sr - out.q_lr;

  if (mode == FidelityMode::reference) {
    if (x_gt == nullptr) {
      throw InputError("compass_evaluate: reference fidelity mode requires a ground truth");
    }
    out.fidelity = scorer.fidelity(x_sr, *x_gt);
  } else {
    // GT-free proxy: compare against the cubic upsample of the LR input
    const int factor = x_sr.height() / x_lr.height();
    if (factor < 1 || x_lr.height() * factor != x_sr.height() ||
        x_lr.width() * factor != x_sr.width()) {
      throw InputError("compass_evaluate: x_sr size is not an integer multiple of x_lr");
    }
    const ImageF lr_up = data::upsample_cubic(x_lr, factor);
    out.fidelity = scorer.fidelity(x_sr, lr_up);
  }
  out.fidelity = std::clamp(out.fidelity, 0.0, 1.0);
  out.reward = compass_reward(out.fidelity, out.q_lr, out.q_sr, gamma);
  return out;
}

}  // namespace flowsr::reward
