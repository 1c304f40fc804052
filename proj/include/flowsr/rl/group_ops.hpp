#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowsr/core/errors.hpp"
#include "flowsr/reward/composite.hpp"

namespace flowsr::rl {

enum class ThresholdScale { unit_normalized, raw };

struct FilterConfig {
  double mean_threshold = 0.9;
  double var_threshold = 0.05;
  ThresholdScale scale = ThresholdScale::unit_normalized;
};

struct FilterVerdict {
  bool kept = false;
  std::string reason;  // empty when kept
  double mean = 0.0;   // on the thresholding scale
  double variance = 0.0;
};

inline double population_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_variance(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

// Group filter: discard when the (rescaled) rewards have a high mean but low
// variance, and always discard zero-variance groups since normalization needs
// std > 0. In unit_normalized mode raw rewards are divided by the analytic
// composite maximum (9) before thresholding.
inline FilterVerdict filter_group(const std::vector<double>& raw_rewards,
                                  const FilterConfig& cfg) {
  if (raw_rewards.size() < 2) throw InputError("filter_group: need K >= 2 rewards");
  std::vector<double> scaled = raw_rewards;
  if (cfg.scale == ThresholdScale::unit_normalized) {
    for (double& s : scaled) s /= reward::kCompassRewardMax;
  }
  FilterVerdict v;
  v.mean = population_mean(scaled);
  v.variance = population_variance(scaled, v.mean);
  // population std == 0 exactly when every reward is identical
  const bool all_equal =
      std::all_of(scaled.begin(), scaled.end(), [&](double s) { return s == scaled.front(); });
  if (all_equal) {
    v.kept = false;
    v.variance = 0.0;
    v.reason = "zero-variance";
    return v;
  }
  if (v.mean > cfg.mean_threshold && v.variance < cfg.var_threshold) {
    v.kept = false;
    v.reason = "high-mean-low-variance";
    return v;
  }
  v.kept = true;
  return v;
}

// Optimal probabilities: r_i = 0.5 + 0.5 clip(z_i, -1, 1) with a population
// standard deviation. Affine-invariant for positive rescalings.
inline std::vector<double> normalize_rewards(const std::vector<double>& raw_rewards) {
  if (raw_rewards.size() < 2) throw InputError("normalize_rewards: need K >= 2 rewards");
  const bool all_equal = std::all_of(raw_rewards.begin(), raw_rewards.end(),
                                     [&](double s) { return s == raw_rewards.front(); });
  const double mean = population_mean(raw_rewards);
  const double std_dev = std::sqrt(population_variance(raw_rewards, mean));
  if (all_equal || std_dev == 0.0) {
    throw InputError("normalize_rewards: zero std; group must be filtered first");
  }
  std::vector<double> r;
  r.reserve(raw_rewards.size());
  for (double s : raw_rewards) {
    const double z = (s - mean) / std_dev;
    r.push_back(0.5 + 0.5 * std::clamp(z, -1.0, 1.0));
  }
  return r;
}

}  // namespace flowsr::rl
