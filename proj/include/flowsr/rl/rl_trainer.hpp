#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsr/core/errors.hpp"
#include "flowsr/data/dataset.hpp"
#include "flowsr/flow/adam.hpp"
#include "flowsr/flow/sft_trainer.hpp"
#include "flowsr/model/checkpoint.hpp"
#include "flowsr/reward/composite.hpp"
#include "flowsr/rl/group_ops.hpp"
#include "flowsr/rl/nft.hpp"
#include "flowsr/sampler/sampler.hpp"

namespace flowsr::rl {

enum class RlStage { fr, nr };

inline const char* stage_label(RlStage s) { return s == RlStage::fr ? "FR-RL" : "NR-RL"; }

struct NFTConfig {
  double lambda = 1.0;
  int k = 24;
  double mean_threshold = 0.9;
  double var_threshold = 0.05;
  ThresholdScale threshold_scale = ThresholdScale::unit_normalized;
  int train_steps_per_rollout = 2;
  double learning_rate = 3e-4;
  int rank = 32;
  double alpha = 64.0;
  int rounds = 20;
  int groups_per_round = 4;
  int sample_steps = 6;
  double initial_noise_scale = 1.0;
  double gamma = 7.0;
  reward::RewardFormulation formulation = reward::RewardFormulation::full;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lambda > 0.0)) throw InputError("NFTConfig: lambda must be > 0");
    if (k < 2) throw InputError("NFTConfig: K must be >= 2");
    if (mean_threshold < 0.0 || var_threshold < 0.0) {
      throw InputError("NFTConfig: thresholds must be >= 0");
    }
    if (rank < 1) throw InputError("NFTConfig: rank must be >= 1");
    if (rounds < 0 || groups_per_round < 1) throw InputError("NFTConfig: bad round counts");
  }
};

struct RolloutGroup {
  model::ConditionTag<float> cond;
  std::vector<ImageF> candidates;
  std::vector<std::uint64_t> candidate_seeds;
  std::vector<double> raw_rewards;
  FilterVerdict verdict;
  std::vector<double> r;  // present iff verdict.kept
};

struct StageArtifacts {
  RlStage stage = RlStage::fr;
  model::LowRankAdapter<float> adapter;
  std::filesystem::path ckpt;
  std::filesystem::path log_path;
  int rounds_run = 0;
  int groups_sampled = 0;
  int groups_kept = 0;
};

// Raw rewards for one candidate group. FR scoring computes fidelity against
// the ground truth; NR scoring uses the GT-free predicted-fidelity proxy.
inline std::vector<double> score_group(const std::vector<ImageF>& candidates, const ImageF& x_lr,
                                       const ImageF* x_gt, const reward::ScorerInterface& scorer,
                                       double gamma, RlStage stage,
                                       reward::RewardFormulation formulation) {
  if (stage == RlStage::fr && x_gt == nullptr) {
    throw InputError("score_group: FR stage requires a ground-truth reference");
  }
  const auto mode =
      stage == RlStage::fr ? reward::FidelityMode::reference : reward::FidelityMode::predicted;
  const auto fn = reward::reward_formulation_variant(formulation, gamma);
  std::vector<double> rewards;
  rewards.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const auto b = reward::compass_evaluate(x_lr, cand, x_gt, scorer, gamma, mode);
    rewards.push_back(fn(b.fidelity, b.q_lr, b.q_sr));
  }
  return rewards;
}

// W_sft + scale * delta: the inference-time policy.
inline model::VelocityModel<float> finalize_policy(const model::VelocityModel<float>& sft_model,
                                                   const model::LowRankAdapter<float>& adapter,
                                                   float merge_scale = 1.0f) {
  return model::merge_adapter(sft_model, adapter, merge_scale);
}

namespace detail {

inline std::vector<std::pair<float*, std::size_t>> adapter_params(
    model::LowRankAdapter<float>& ad) {
  std::vector<std::pair<float*, std::size_t>> out;
  for (auto& l : ad.layers) {
    out.push_back({l.a.data(), l.a.size()});
    out.push_back({l.b.data(), l.b.size()});
  }
  return out;
}

inline std::vector<std::vector<float>> take_adapter_grads(model::AdapterGrads<float>&& g) {
  std::vector<std::vector<float>> out;
  out.reserve(g.a.size() * 2);
  for (std::size_t i = 0; i < g.a.size(); ++i) {
    out.push_back(std::move(g.a[i]));
    out.push_back(std::move(g.b[i]));
  }
  return out;
}

}  // namespace detail

// One full RL stage: rollout -> score -> filter -> normalize -> negative-aware
// updates of the adapter only; base weights are never written. v_old is the
// policy snapshot that generated the round's rollouts.
inline StageArtifacts rl_train_stage(RlStage stage, const model::VelocityModel<float>& policy_base,
                                     const std::optional<model::LowRankAdapter<float>>& init_adapter,
                                     const data::DatasetManifest& dataset,
                                     const reward::ScorerInterface& scorer, const NFTConfig& cfg,
                                     const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (stage == RlStage::nr && !init_adapter) {
    throw InputError("rl_train_stage: NR stage requires the FR adapter (FR adapter required)");
  }
  if (stage == RlStage::fr && !dataset.paired) {
    throw InputError("rl_train_stage: FR stage requires a paired dataset");
  }
  if (dataset.items.empty()) throw InputError("rl_train_stage: empty dataset");
  fs::create_directories(out_dir);

  const std::uint64_t stage_seed =
      derive_seed(cfg.seed, stage == RlStage::fr ? 0xf51a6e01ull : 0xf51a6e02ull);

  model::LowRankAdapter<float> adapter =
      init_adapter ? *init_adapter
                   : model::make_adapter<float>(policy_base, cfg.rank,
                                                static_cast<float>(cfg.alpha), stage_seed);
  model::check_adapter_compatible(policy_base, adapter, "rl_train_stage");

  flow::Adam adam(flow::AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  {
    auto params = detail::adapter_params(adapter);
    adam.init(params);
  }

  StageArtifacts art;
  art.stage = stage;
  art.log_path = out_dir / (std::string(stage == RlStage::fr ? "fr" : "nr") + "_rl_log.jsonl");
  std::ofstream log(art.log_path);

  FilterConfig fcfg{cfg.mean_threshold, cfg.var_threshold, cfg.threshold_scale};

  // condition cache: upsampled LR per dataset item, loaded lazily
  std::vector<std::optional<model::ConditionTag<float>>> cond_cache(dataset.items.size());
  std::vector<std::optional<ImageF>> gt_cache(dataset.items.size());
  auto condition_for = [&](std::size_t idx) -> const model::ConditionTag<float>& {
    if (!cond_cache[idx]) {
      model::ConditionTag<float> cond;
      cond.lr_image = data::upsample_cubic(data::load_lr(dataset, idx), dataset.factor);
      cond.prompt_id = dataset.items[idx].prompt_id;
      cond_cache[idx] = std::move(cond);
    }
    return *cond_cache[idx];
  };
  auto gt_for = [&](std::size_t idx) -> const ImageF* {
    if (!dataset.paired) return nullptr;
    if (!gt_cache[idx]) gt_cache[idx] = data::load_pair(dataset, idx).x_hr;
    return &*gt_cache[idx];
  };

  // starvation accounting over one dataset epoch worth of rounds
  const int rounds_per_epoch = std::max<int>(
      1, static_cast<int>((dataset.items.size() + cfg.groups_per_round - 1) /
                          static_cast<std::size_t>(cfg.groups_per_round)));
  int epoch_kept = 0;

  for (int round = 0; round < cfg.rounds; ++round) {
    // rollout-time snapshot: this is the reference policy v_old
    const model::LowRankAdapter<float> old_adapter = adapter;
    const model::VelocityModel<float> rollout_policy = model::merge_adapter(policy_base, old_adapter);
    NftPolicy<float> old_policy{&rollout_policy, nullptr};
    NftPolicy<float> theta{&policy_base, &adapter};

    std::vector<RolloutGroup> kept_groups;
    double round_raw_sum = 0.0;
    std::size_t round_raw_count = 0;
    int round_kept = 0;

    for (int g = 0; g < cfg.groups_per_round; ++g) {
      const std::int64_t slot = static_cast<std::int64_t>(round) * cfg.groups_per_round + g;
      const std::size_t idx = flow::batch_item_index(dataset.items.size(), cfg.groups_per_round,
                                                     derive_seed(stage_seed, 0x17e6full),
                                                     slot / cfg.groups_per_round,
                                                     static_cast<int>(slot % cfg.groups_per_round));
      RolloutGroup group;
      group.cond = condition_for(idx);

      sampler::SampleConfig scfg;
      scfg.steps = cfg.sample_steps;
      scfg.initial_noise_scale = cfg.initial_noise_scale;
      scfg.seed = derive_seed(stage_seed, 0x4011u + (static_cast<std::uint64_t>(round) << 20) +
                                               (static_cast<std::uint64_t>(g) << 4));
      group.candidates = sampler::rollout_batch<float>(rollout_policy, nullptr, group.cond, cfg.k, scfg);
      group.candidate_seeds.resize(group.candidates.size());
      for (std::size_t i = 0; i < group.candidates.size(); ++i) {
        group.candidate_seeds[i] = scfg.seed + i;
      }

      const ImageF lr = data::load_lr(dataset, idx);
      std::vector<ImageF> clamped;
      clamped.reserve(group.candidates.size());
      for (const auto& cand : group.candidates) clamped.push_back(clamped01(cand));
      group.raw_rewards =
          score_group(clamped, lr, gt_for(idx), scorer, cfg.gamma, stage, cfg.formulation);
      for (double s : group.raw_rewards) round_raw_sum += s;
      round_raw_count += group.raw_rewards.size();

      group.verdict = filter_group(group.raw_rewards, fcfg);
      if (group.verdict.kept) {
        group.r = normalize_rewards(group.raw_rewards);
        ++round_kept;
        kept_groups.push_back(std::move(group));
      }
      ++art.groups_sampled;
    }
    art.groups_kept += round_kept;
    epoch_kept += round_kept;

    double round_loss = 0.0;
    double mean_r = 0.0;
    if (!kept_groups.empty()) {
      std::size_t n_candidates = 0;
      for (const auto& gr : kept_groups) {
        n_candidates += gr.candidates.size();
        for (double ri : gr.r) mean_r += ri;
      }
      mean_r /= static_cast<double>(n_candidates);

      for (int opt = 0; opt < cfg.train_steps_per_rollout; ++opt) {
        auto grads = model::AdapterGrads<float>::zeros_like(adapter);
        double loss_sum = 0.0;
        for (const auto& gr : kept_groups) {
          for (std::size_t i = 0; i < gr.candidates.size(); ++i) {
            loss_sum += nft_loss<float>(theta, old_policy, gr.candidates[i], gr.cond, gr.r[i],
                                        cfg.lambda, stage_seed, gr.candidate_seeds[i], opt,
                                        nullptr, &grads);
          }
        }
        const float inv = 1.0f / static_cast<float>(n_candidates);
        for (auto& a : grads.a)
          for (auto& v : a) v *= inv;
        for (auto& b : grads.b)
          for (auto& v : b) v *= inv;
        auto params = detail::adapter_params(adapter);
        adam.step(params, detail::take_adapter_grads(std::move(grads)));
        round_loss = loss_sum / static_cast<double>(n_candidates);
      }
    }

    nlohmann::json row;
    row["round"] = round;
    row["groups_sampled"] = cfg.groups_per_round;
    row["groups_kept"] = round_kept;
    row["mean_raw_reward"] = round_raw_count ? round_raw_sum / static_cast<double>(round_raw_count) : 0.0;
    row["mean_r"] = mean_r;
    row["loss"] = round_loss;
    row["adapter_norm"] = model::adapter_norm(adapter);
    log << row.dump() << "\n";
    log.flush();

    ++art.rounds_run;
    if ((round + 1) % rounds_per_epoch == 0) {
      if (epoch_kept == 0) {
        throw NumericError(
            "rl_train_stage: reward starvation, every group in the last epoch was discarded; "
            "review filter thresholds (mean " + std::to_string(cfg.mean_threshold) + ", var " +
            std::to_string(cfg.var_threshold) + ") or the threshold scale");
      }
      epoch_kept = 0;
    }
  }

  art.adapter = adapter;
  model::Checkpoint<float> ck;
  ck.model = policy_base;
  ck.adapter = adapter;
  ck.stage = stage_label(stage);
  ck.seed_lineage = "rl:" + std::to_string(cfg.seed);
  art.ckpt = out_dir / (std::string(stage == RlStage::fr ? "fr" : "nr") + "_adapter");
  model::save_checkpoint(ck, art.ckpt);
  return art;
}

// Mean kept-or-not composite reward of a policy on the first n_items of a
// dataset; the directional progress statistic used by tests and reports.
inline double evaluate_mean_reward(const model::VelocityModel<float>& policy,
                                   const data::DatasetManifest& dataset,
                                   const reward::ScorerInterface& scorer, const NFTConfig& cfg,
                                   RlStage stage, int n_items, std::uint64_t eval_seed) {
  if (n_items < 1) throw InputError("evaluate_mean_reward: n_items must be >= 1");
  const std::size_t n = std::min<std::size_t>(dataset.items.size(),
                                              static_cast<std::size_t>(n_items));
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    model::ConditionTag<float> cond;
    const ImageF lr = data::load_lr(dataset, idx);
    cond.lr_image = data::upsample_cubic(lr, dataset.factor);
    cond.prompt_id = dataset.items[idx].prompt_id;

    sampler::SampleConfig scfg;
    scfg.steps = cfg.sample_steps;
    scfg.initial_noise_scale = cfg.initial_noise_scale;
    scfg.seed = derive_seed(eval_seed, idx);
    const auto group = sampler::rollout_batch<float>(policy, nullptr, cond, std::max(2, cfg.k / 4),
                                                     scfg);
    std::vector<ImageF> clamped;
    for (const auto& cand : group) clamped.push_back(clamped01(cand));
    std::optional<ImageF> gt;
    if (dataset.paired) gt = data::load_pair(dataset, idx).x_hr;
    const auto rewards = score_group(clamped, lr, gt ? &*gt : nullptr, scorer, cfg.gamma, stage,
                                     cfg.formulation);
    for (double s : rewards) total += s;
    count += rewards.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace flowsr::rl
