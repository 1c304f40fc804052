#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsr/core/errors.hpp"
#include "flowsr/core/rng.hpp"
#include "flowsr/data/dataset.hpp"
#include "flowsr/data/degrade.hpp"
#include "flowsr/flow/adam.hpp"
#include "flowsr/flow/flow_ops.hpp"
#include "flowsr/model/checkpoint.hpp"
#include "flowsr/model/velocity_model.hpp"

namespace flowsr::flow {

// Cold-start stage: flow-matching regression on paired LR-HR data.
//
// All per-step randomness (batch order, t draws, noise draws) is a pure
// function of (seed, step, sample slot), so an interrupted run resumed from
// a checkpoint reproduces the uninterrupted run bit for bit.

struct SftConfig {
  model::ArchConfig arch;
  int steps = 3000;
  int batch = 6;
  double lr = 1e-3;
  int base_snapshot_steps = 500;  // step at which the weakly-trained BASE policy is captured
  int log_every = 25;
  int ckpt_every = 1000;
  // std of the perturbation added to x_t during training; teaches the network
  // the off-interpolation states an Euler trajectory actually visits
  double xt_aug = 0.05;
  std::uint64_t seed = 1;
};

struct SftResult {
  std::filesystem::path base_ckpt;
  std::filesystem::path sft_ckpt;
  std::filesystem::path log_path;
  double final_loss = 0.0;
};

// One conditioned pair ready for training.
struct SftItem {
  ImageF x_hr;
  ImageF lr_up;  // LR upsampled to HR resolution
  int prompt_id = 0;
};

inline std::vector<SftItem> load_sft_items(const data::DatasetManifest& m) {
  std::vector<SftItem> items;
  items.reserve(m.items.size());
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    auto pair = data::load_pair(m, i);
    SftItem it;
    it.lr_up = data::upsample_cubic(pair.x_lr, m.factor);
    it.x_hr = std::move(pair.x_hr);
    it.prompt_id = pair.prompt_id;
    items.push_back(std::move(it));
  }
  return items;
}

// --- stateless per-step draws -------------------------------------------------

inline double draw_t(std::uint64_t seed, std::int64_t step, int slot) {
  Pcg32 rng(derive_seed(seed, 0x70000000ull ^ (static_cast<std::uint64_t>(step) << 8) ^
                                  static_cast<std::uint64_t>(slot)));
  return rng.next_double();
}

template <typename T>
Image<T> draw_eps(int h, int w, int c, std::uint64_t seed, std::int64_t step, int slot) {
  Pcg32 rng(derive_seed(seed, 0xe9500000ull ^ (static_cast<std::uint64_t>(step) << 8) ^
                                  static_cast<std::uint64_t>(slot)));
  return gaussian_image<T>(h, w, c, rng);
}

template <typename T>
Image<T> draw_xt_aug(int h, int w, int c, std::uint64_t seed, std::int64_t step, int slot) {
  Pcg32 rng(derive_seed(seed, 0xa6000000ull ^ (static_cast<std::uint64_t>(step) << 8) ^
                                  static_cast<std::uint64_t>(slot)));
  return gaussian_image<T>(h, w, c, rng);
}

inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                                  std::int64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Pcg32 rng(derive_seed(seed, 0x5affe11eull ^ static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_below(static_cast<std::uint32_t>(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

inline std::size_t batch_item_index(std::size_t n, int batch, std::uint64_t seed,
                                    std::int64_t step, int slot) {
  const std::int64_t g = step * batch + slot;
  const std::int64_t epoch = g / static_cast<std::int64_t>(n);
  const std::size_t pos = static_cast<std::size_t>(g % static_cast<std::int64_t>(n));
  return epoch_permutation(n, seed, epoch)[pos];
}

// Loss-only evaluation against an arbitrary velocity predictor, sharing the
// exact draws of sft_step. Used as the independent oracle in tests.
template <typename T, typename PredictFn>
double flow_batch_loss(PredictFn&& predict, const std::vector<const SftItem*>& batch,
                       std::uint64_t seed, std::int64_t step, double xt_aug = 0.0) {
  if (batch.empty()) throw InputError("flow_batch_loss: empty batch");
  double total = 0.0;
  for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
    const SftItem& it = *batch[static_cast<std::size_t>(k)];
    const Image<T> hr = it.x_hr.cast<T>();
    const double t = draw_t(seed, step, k);
    const Image<T> eps = draw_eps<T>(hr.height(), hr.width(), hr.channels(), seed, step, k);
    FlowSample<T> fs = make_flow_sample(hr, eps, t);
    if (xt_aug > 0.0) {
      const Image<T> zeta =
          draw_xt_aug<T>(hr.height(), hr.width(), hr.channels(), seed, step, k);
      kernels::scale_add(fs.x_t.size(), static_cast<T>(xt_aug), zeta.data(), fs.x_t.data());
    }
    const Image<T> v = predict(fs.x_t, t, it);
    total += mse(fs.v_target, v);
  }
  return total / static_cast<double>(batch.size());
}

// One optimization step: draws (t, eps) per sample, accumulates gradients of
// the mean flow-matching loss and applies one Adam update.
inline double sft_step(model::VelocityModel<float>& m, Adam& adam,
                       const std::vector<const SftItem*>& batch, std::uint64_t seed,
                       std::int64_t step, double xt_aug = 0.0) {
  if (batch.empty()) throw InputError("sft_step: empty batch");
  auto grads = model::ParamGrads<float>::zeros_like(m);
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
    const SftItem& it = *batch[static_cast<std::size_t>(k)];
    const double t = draw_t(seed, step, k);
    const ImageF eps =
        draw_eps<float>(it.x_hr.height(), it.x_hr.width(), it.x_hr.channels(), seed, step, k);
    FlowSample<float> fs = make_flow_sample(it.x_hr, eps, t);
    if (xt_aug > 0.0) {
      const ImageF zeta = draw_xt_aug<float>(it.x_hr.height(), it.x_hr.width(),
                                             it.x_hr.channels(), seed, step, k);
      kernels::scale_add(fs.x_t.size(), static_cast<float>(xt_aug), zeta.data(), fs.x_t.data());
    }

    model::ConditionTag<float> cond;
    cond.lr_image = it.lr_up;
    cond.prompt_id = it.prompt_id;

    model::ForwardCache<float> cache;
    const ImageF v = model::forward_cached<float>(m, nullptr, fs.x_t, t, cond, cache);
    total += mse(fs.v_target, v);

    ImageF gout = ImageF::zeros_like(v);
    const float scale = static_cast<float>(2.0 * inv_batch / static_cast<double>(v.size()));
    kernels::axpby(v.size(), scale, v.data(), -scale, fs.v_target.data(), gout.data());
    model::backward<float>(m, nullptr, cache, gout, &grads, nullptr);
  }

  const double loss = total * inv_batch;
  if (!std::isfinite(loss)) {
    throw NumericError("sft_step: non-finite loss at step " + std::to_string(step) + " (seed " +
                       std::to_string(seed) + ")");
  }

  auto blocks = model::param_blocks(m);
  std::vector<std::pair<float*, std::size_t>> params;
  params.reserve(blocks.size());
  for (auto& b : blocks) params.push_back({b.data, b.size});
  adam.step(params, grads.blocks);
  return loss;
}

inline SftResult train_sft(const data::DatasetManifest& dataset, const SftConfig& cfg,
                           const std::filesystem::path& out_dir,
                           const std::optional<std::filesystem::path>& resume = std::nullopt) {
  namespace fs = std::filesystem;
  if (!dataset.paired) throw InputError("train_sft: dataset must be paired");
  fs::create_directories(out_dir);

  const auto items = load_sft_items(dataset);
  if (items.empty()) throw InputError("train_sft: empty dataset");

  auto m = model::VelocityModel<float>::create(cfg.arch, cfg.seed);
  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  {
    auto blocks = model::param_blocks(m);
    std::vector<std::pair<float*, std::size_t>> params;
    for (auto& b : blocks) params.push_back({b.data, b.size});
    adam.init(params);
  }
  std::int64_t start_step = 0;

  if (resume) {
    auto ck = model::load_checkpoint<float>(*resume, cfg.arch);
    if (!ck.optimizer) throw CheckpointError("train_sft: resume checkpoint lacks optimizer state");
    m = std::move(ck.model);
    adam.from_blob(*ck.optimizer);
    start_step = adam.step_count();
  }

  SftResult result;
  result.base_ckpt = out_dir / "base";
  result.sft_ckpt = out_dir / "sft";
  result.log_path = out_dir / "sft_loss.jsonl";
  const std::string lineage = "master:" + std::to_string(cfg.seed);

  std::ofstream log(result.log_path, resume ? std::ios::app : std::ios::out);
  const auto t0 = std::chrono::steady_clock::now();

  auto save_stage = [&](const fs::path& path, const std::string& stage, bool with_opt) {
    model::Checkpoint<float> ck;
    ck.model = m;
    ck.stage = stage;
    ck.seed_lineage = lineage;
    if (with_opt) ck.optimizer = adam.to_blob();
    model::save_checkpoint(ck, path);
  };

  if (cfg.base_snapshot_steps <= start_step && start_step == 0) {
    // zero-step snapshot requested: base == initialization
    if (cfg.base_snapshot_steps == 0) save_stage(result.base_ckpt, "BASE", false);
  }

  double loss = 0.0;
  for (std::int64_t step = start_step; step < cfg.steps; ++step) {
    std::vector<const SftItem*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch));
    for (int k = 0; k < cfg.batch; ++k) {
      batch.push_back(&items[batch_item_index(items.size(), cfg.batch, cfg.seed, step, k)]);
    }
    loss = sft_step(m, adam, batch, cfg.seed, step, cfg.xt_aug);

    const std::int64_t done = step + 1;
    if (done % cfg.log_every == 0 || done == cfg.steps) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      nlohmann::json row;
      row["step"] = done;
      row["loss"] = loss;
      row["lr"] = cfg.lr;
      row["wall_ms"] = ms;
      log << row.dump() << "\n";
      log.flush();
    }
    if (done == cfg.base_snapshot_steps) save_stage(result.base_ckpt, "BASE", false);
    if (cfg.ckpt_every > 0 && done % cfg.ckpt_every == 0) {
      save_stage(out_dir / "resume", "SFT-RESUME", true);
    }
  }

  if (cfg.steps == 0 && cfg.base_snapshot_steps > 0) {
    // base snapshot never reached; capture initialization for downstream stages
    save_stage(result.base_ckpt, "BASE", false);
  }
  save_stage(result.sft_ckpt, "SFT", true);
  result.final_loss = loss;
  return result;
}

}  // namespace flowsr::flow
