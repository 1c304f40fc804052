#pragma once

#include <functional>
#include <optional>

#include "flowsr/core/image.hpp"
#include "flowsr/reward/scorer.hpp"

namespace flowsr::reward {

// Full decomposition of one LR -> SR transition score.
struct RewardBreakdown {
  double fidelity = 0.0;   // F in [0,1]
  double q_lr = 0.0;       // [1,5]
  double q_sr = 0.0;       // [1,5]
  double delta_q = 0.0;    // q_sr - q_lr
  double reward = 0.0;     // composite value
};

// R = F*Q_LR + F^(Q_LR/gamma) * (Q_SR - Q_LR); gamma defaults to 7.
// The exponent gates the perceptual-gain term: high-quality inputs demand
// near-perfect fidelity before any gain counts.
double compass_reward(double fidelity, double q_lr, double q_sr, double gamma = 7.0);

// Analytic maximum of the composite value used to rescale rewards onto a
// unit range before threshold filtering: 1*5 + 1*4 = 9.
inline constexpr double kCompassRewardMax = 9.0;

enum class RewardFormulation { gain_only, gated_gain, full };

RewardFormulation reward_formulation_from_string(const std::string& name);
const char* reward_formulation_name(RewardFormulation f);

// Ablation variants sharing the full formulation's inputs:
//   gain_only:  delta_q
//   gated_gain: F^(Q_LR/gamma) * delta_q
//   full:       compass_reward
using RewardFn = std::function<double(double fidelity, double q_lr, double q_sr)>;
RewardFn reward_formulation_variant(RewardFormulation kind, double gamma = 7.0);

enum class FidelityMode { predicted, reference };

// Scores one transition. In reference mode F comes from the ground truth; in
// predicted (GT-free) mode F is proxied against the cubic upsample of the LR
// input, which measures deviation from the input's own structure rather than
// from an unknown original.
RewardBreakdown compass_evaluate(const ImageF& x_lr, const ImageF& x_sr,
                                 const ImageF* x_gt, const ScorerInterface& scorer,
                                 double gamma, FidelityMode mode);

}  // namespace flowsr::reward
