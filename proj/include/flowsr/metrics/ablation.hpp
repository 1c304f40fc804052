#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowsr/metrics/report.hpp"
#include "flowsr/rl/rl_trainer.hpp"

namespace flowsr::metrics {

// One full RL pipeline (FR then NR, unless the axis says otherwise) per axis
// value, all runs sharing the same seeds, base/SFT checkpoints and datasets,
// followed by an evaluation of the merged policy. Axes:
//   gamma               -> numeric values for the reward exponent scale
//   reward_formulation  -> full | gated_gain | gain_only
//   rl_init             -> base | sft (which weights RL optimizes on)
//   stages              -> fr | fr+nr
struct AblationCell {
  std::string value;
  PolicyEvaluation eval;
  rl::StageArtifacts fr_artifacts;
  std::optional<rl::StageArtifacts> nr_artifacts;
};

struct AblationInputs {
  const model::VelocityModel<float>* base_model = nullptr;
  const model::VelocityModel<float>* sft_model = nullptr;
  const data::DatasetManifest* train_paired = nullptr;
  const data::DatasetManifest* unpaired = nullptr;
  const data::DatasetManifest* eval_set = nullptr;
  const reward::ScorerInterface* scorer = nullptr;
  sampler::SampleConfig eval_sample_cfg;
  float merge_scale = 1.0f;
  std::size_t eval_max_items = 0;
};

inline AblationCell run_ablation_cell(const std::string& axis, const std::string& value,
                                      const AblationInputs& in, rl::NFTConfig cfg,
                                      const std::filesystem::path& out_dir) {
  const model::VelocityModel<float>* rl_base = in.base_model;
  bool run_nr = true;
  if (axis == "gamma") {
    cfg.gamma = std::stod(value);
  } else if (axis == "reward_formulation") {
    cfg.formulation = reward::reward_formulation_from_string(value);
  } else if (axis == "rl_init") {
    if (value == "base") {
      rl_base = in.base_model;
    } else if (value == "sft") {
      rl_base = in.sft_model;
    } else {
      throw InputError("ablation rl_init axis expects base|sft, got " + value);
    }
  } else if (axis == "stages") {
    if (value == "fr") {
      run_nr = false;
    } else if (value != "fr+nr") {
      throw InputError("ablation stages axis expects fr|fr+nr, got " + value);
    }
  } else {
    throw InputError("unknown ablation axis: " + axis);
  }

  AblationCell cell;
  cell.value = value;
  cell.fr_artifacts = rl::rl_train_stage(rl::RlStage::fr, *rl_base, std::nullopt,
                                         *in.train_paired, *in.scorer, cfg, out_dir / "fr");
  const model::LowRankAdapter<float>* final_adapter = &cell.fr_artifacts.adapter;
  if (run_nr) {
    cell.nr_artifacts = rl::rl_train_stage(rl::RlStage::nr, *rl_base, cell.fr_artifacts.adapter,
                                           *in.unpaired, *in.scorer, cfg, out_dir / "nr");
    final_adapter = &cell.nr_artifacts->adapter;
  }
  const auto merged = rl::finalize_policy(*in.sft_model, *final_adapter, in.merge_scale);
  cell.eval = evaluate_policy(merged, *in.eval_set, in.eval_sample_cfg, *in.scorer, cfg.gamma,
                              in.eval_max_items);
  cell.eval.policy.method = axis + "=" + value;
  return cell;
}

inline std::vector<AblationCell> run_ablation_grid(const std::string& axis,
                                                   const std::vector<std::string>& values,
                                                   const AblationInputs& in,
                                                   const rl::NFTConfig& base_cfg,
                                                   const std::filesystem::path& out_dir) {
  if (values.empty()) throw InputError("run_ablation_grid: no axis values");
  std::vector<AblationCell> cells;
  for (const auto& v : values) {
    cells.push_back(run_ablation_cell(axis, v, in, base_cfg, out_dir / ("cell_" + v)));
  }
  return cells;
}

inline std::string format_ablation_table(const std::string& axis,
                                         const std::vector<AblationCell>& cells) {
  std::vector<MetricReport> reports;
  for (const auto& c : cells) reports.push_back(c.eval.policy);
  if (!cells.empty() && cells.front().eval.baseline) {
    reports.push_back(*cells.front().eval.baseline);
  }
  return "# ablation axis: " + axis + "\n" + format_report_table(reports);
}

}  // namespace flowsr::metrics
