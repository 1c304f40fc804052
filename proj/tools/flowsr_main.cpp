#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowsr/cli/config.hpp"
#include "flowsr/cli/run_dir.hpp"
#include "flowsr/data/dataset.hpp"
#include "flowsr/flow/sft_trainer.hpp"
#include "flowsr/kernels/kernels.hpp"
#include "flowsr/metrics/ablation.hpp"
#include "flowsr/metrics/plots.hpp"
#include "flowsr/metrics/report.hpp"
#include "flowsr/model/checkpoint.hpp"
#include "flowsr/reward/annotate.hpp"
#include "flowsr/reward/remote_scorer.hpp"
#include "flowsr/rl/rl_trainer.hpp"
#include "flowsr/sampler/sampler.hpp"

namespace fs = std::filesystem;
using namespace flowsr;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::string run_name;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  cmd->add_option("--run-dir", args.run_dir, "explicit run directory (must be fresh)");
  cmd->add_option("--run-name", args.run_name, "run directory name prefix");
}

cli::RunConfig build_config(const CommonArgs& args) {
  cli::RunConfig cfg;
  if (!args.config_file.empty()) cfg.load_file(args.config_file);
  for (const auto& kv : args.overrides) cfg.set_kv(kv);
  if (const char* root = std::getenv("FLOWSR_RUN_ROOT")) cfg.set("run.root", root);
  return cfg;
}

fs::path open_run_dir(const CommonArgs& args, const cli::RunConfig& cfg,
                      const std::string& subcommand) {
  fs::path dir;
  if (!args.run_dir.empty()) {
    dir = args.run_dir;
    cli::claim_run_dir(dir);
  } else {
    const std::string name = args.run_name.empty() ? subcommand : args.run_name;
    dir = cli::make_run_dir(cfg.get_string("run.root"), name);
  }
  std::ofstream echo(dir / "config.effective");
  echo << cfg.echo();
  return dir;
}

model::ArchConfig arch_from_config(const cli::RunConfig& cfg) {
  model::ArchConfig arch;
  arch.channels = static_cast<int>(cfg.get_int("data.channels"));
  arch.width = static_cast<int>(cfg.get_int("model.width"));
  arch.depth = static_cast<int>(cfg.get_int("model.depth"));
  arch.prompt_vocab = 4;  // generator families
  arch.prompt_dim = static_cast<int>(cfg.get_int("model.prompt_dim"));
  arch.time_dim = static_cast<int>(cfg.get_int("model.time_dim"));
  return arch;
}

data::SpecSampler sampler_from_config(const cli::RunConfig& cfg) {
  data::SpecSampler s;
  s.blur_min = cfg.get_double("data.blur_min");
  s.blur_max = cfg.get_double("data.blur_max");
  s.noise_min = cfg.get_double("data.noise_min");
  s.noise_max = cfg.get_double("data.noise_max");
  s.block_min = cfg.get_double("data.block_min");
  s.block_max = cfg.get_double("data.block_max");
  s.factor = static_cast<int>(cfg.get_int("data.factor"));
  s.block_size = static_cast<int>(cfg.get_int("data.block_size"));
  return s;
}

std::vector<data::GeneratorKind> kinds_from_config(const cli::RunConfig& cfg) {
  std::vector<data::GeneratorKind> kinds;
  std::string list = cfg.get_string("data.kinds");
  std::size_t pos = 0;
  while (pos < list.size()) {
    std::size_t comma = list.find(',', pos);
    if (comma == std::string::npos) comma = list.size();
    kinds.push_back(data::generator_kind_from_string(list.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return kinds;
}

reward::QualityConstants quality_from_config(const cli::RunConfig& cfg) {
  reward::QualityConstants k;
  k.a = cfg.get_double("reward.q_a");
  k.b = cfg.get_double("reward.q_b");
  k.c = cfg.get_double("reward.q_c");
  k.d = cfg.get_double("reward.q_d");
  k.block_size = static_cast<int>(cfg.get_int("data.block_size"));
  return k;
}

reward::FidelityConstants fidelity_from_config(const cli::RunConfig& cfg) {
  reward::FidelityConstants k;
  k.ssim_weight = cfg.get_double("reward.fid_ssim_weight");
  k.grad_norm = cfg.get_double("reward.fid_grad_norm");
  return k;
}

std::unique_ptr<reward::ScorerInterface> scorer_from_config(const cli::RunConfig& cfg) {
  const std::string url = cfg.get_string("remote.url");
  if (!url.empty()) {
    // accepted form: host:port
    const auto colon = url.rfind(':');
    if (colon == std::string::npos) throw ConfigError("remote.url expects host:port");
    return std::make_unique<reward::RemoteScorer>(
        url.substr(0, colon), std::stoi(url.substr(colon + 1)),
        static_cast<int>(cfg.get_int("remote.timeout_ms")),
        static_cast<int>(cfg.get_int("remote.retries")));
  }
  return std::make_unique<reward::LocalProxyScorer>(quality_from_config(cfg),
                                                    fidelity_from_config(cfg),
                                                    cfg.get_double("reward.tie_margin"));
}

flow::SftConfig sft_from_config(const cli::RunConfig& cfg) {
  flow::SftConfig s;
  s.arch = arch_from_config(cfg);
  s.steps = static_cast<int>(cfg.get_int("sft.steps"));
  s.batch = static_cast<int>(cfg.get_int("sft.batch"));
  s.lr = cfg.get_double("sft.lr");
  s.base_snapshot_steps = static_cast<int>(cfg.get_int("sft.base_snapshot_steps"));
  s.log_every = static_cast<int>(cfg.get_int("sft.log_every"));
  s.ckpt_every = static_cast<int>(cfg.get_int("sft.ckpt_every"));
  s.xt_aug = cfg.get_double("sft.xt_aug");
  s.seed = static_cast<std::uint64_t>(cfg.get_int("master_seed"));
  return s;
}

rl::NFTConfig nft_from_config(const cli::RunConfig& cfg) {
  rl::NFTConfig n;
  n.lambda = cfg.get_double("rl.lambda");
  n.k = static_cast<int>(cfg.get_int("rl.k"));
  n.mean_threshold = cfg.get_double("rl.mean_threshold");
  n.var_threshold = cfg.get_double("rl.var_threshold");
  const std::string scale = cfg.get_string("rl.threshold_scale");
  if (scale == "unit") {
    n.threshold_scale = rl::ThresholdScale::unit_normalized;
  } else if (scale == "raw") {
    n.threshold_scale = rl::ThresholdScale::raw;
  } else {
    throw ConfigError("rl.threshold_scale expects unit|raw");
  }
  n.train_steps_per_rollout = static_cast<int>(cfg.get_int("rl.train_steps_per_rollout"));
  n.learning_rate = cfg.get_double("rl.lr");
  n.rank = static_cast<int>(cfg.get_int("rl.rank"));
  n.alpha = cfg.get_double("rl.alpha");
  n.rounds = static_cast<int>(cfg.get_int("rl.rounds"));
  n.groups_per_round = static_cast<int>(cfg.get_int("rl.groups_per_round"));
  n.sample_steps = static_cast<int>(cfg.get_int("sampler.train_steps"));
  n.initial_noise_scale = cfg.get_double("sampler.noise_scale");
  n.gamma = cfg.get_double("reward.gamma");
  n.formulation = reward::reward_formulation_from_string(cfg.get_string("reward.formulation"));
  n.seed = static_cast<std::uint64_t>(cfg.get_int("master_seed"));
  return n;
}

sampler::SampleConfig infer_cfg_from_config(const cli::RunConfig& cfg) {
  sampler::SampleConfig s;
  s.steps = static_cast<int>(cfg.get_int("sampler.infer_steps"));
  s.initial_noise_scale = cfg.get_double("sampler.noise_scale");
  s.seed = static_cast<std::uint64_t>(cfg.get_int("master_seed"));
  return s;
}

// Policy represented by a checkpoint: plain weights, or base+adapter merged.
model::VelocityModel<float> policy_from_checkpoint(const model::Checkpoint<float>& ck,
                                                   float merge_scale) {
  if (ck.adapter) return model::merge_adapter(ck.model, *ck.adapter, merge_scale);
  return ck.model;
}

int run_guarded(const fs::path& run_dir, const std::string& subcommand,
                const std::function<void()>& body) {
  try {
    body();
    cli::write_exit_summary(run_dir, subcommand, true);
    std::cout << "[" << subcommand << "] ok, run dir: " << run_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "[" << subcommand << "] error: " << e.what() << "\n";
    cli::write_exit_summary(run_dir, subcommand, false, e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowsr: flow-matching super-resolution with reward-aligned fine-tuning"};
  app.require_subcommand(1);

  // --- synth-data ---
  auto* synth = app.add_subcommand("synth-data", "build paired, held-out and LR-only datasets");
  CommonArgs synth_args;
  add_common(synth, synth_args);

  // --- train-sft ---
  auto* tsft = app.add_subcommand("train-sft", "cold-start flow-matching training");
  CommonArgs tsft_args;
  std::string tsft_data, tsft_resume;
  add_common(tsft, tsft_args);
  tsft->add_option("--data", tsft_data, "paired dataset directory")->required();
  tsft->add_option("--resume", tsft_resume, "resume checkpoint path (without extension)");

  // --- train-rl ---
  auto* trl = app.add_subcommand("train-rl", "negative-aware online RL stage");
  CommonArgs trl_args;
  std::string trl_stage, trl_data, trl_base, trl_init_adapter;
  add_common(trl, trl_args);
  trl->add_option("--stage", trl_stage, "fr | nr")->required();
  trl->add_option("--data", trl_data, "dataset directory (paired for fr)")->required();
  trl->add_option("--base-ckpt", trl_base, "policy weights RL optimizes on")->required();
  trl->add_option("--init-adapter", trl_init_adapter, "FR adapter checkpoint (required for nr)");

  // --- annotate ---
  auto* annot = app.add_subcommand("annotate", "three-stage perceptual annotation of SR groups");
  CommonArgs annot_args;
  std::string annot_data, annot_ckpt;
  add_common(annot, annot_args);
  annot->add_option("--data", annot_data, "dataset directory")->required();
  annot->add_option("--ckpt", annot_ckpt, "policy checkpoint used to sample candidates")->required();

  // --- evaluate ---
  auto* eval = app.add_subcommand("evaluate", "metric report for a policy on a dataset");
  CommonArgs eval_args;
  std::string eval_data, eval_ckpt;
  add_common(eval, eval_args);
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "policy checkpoint")->required();

  // --- ablate ---
  auto* abl = app.add_subcommand("ablate", "one RL+eval pipeline per axis value, shared seeds");
  CommonArgs abl_args;
  std::string abl_axis, abl_values, abl_base, abl_sft, abl_train, abl_unpaired, abl_eval;
  add_common(abl, abl_args);
  abl->add_option("--axis", abl_axis, "gamma | reward_formulation | rl_init | stages")->required();
  abl->add_option("--values", abl_values, "comma-separated axis values")->required();
  abl->add_option("--base-ckpt", abl_base, "base policy checkpoint")->required();
  abl->add_option("--sft-ckpt", abl_sft, "SFT checkpoint (merge target)")->required();
  abl->add_option("--train-data", abl_train, "paired dataset for the FR stage")->required();
  abl->add_option("--unpaired-data", abl_unpaired, "LR-only dataset for the NR stage")->required();
  abl->add_option("--eval-data", abl_eval, "dataset for the final evaluation")->required();

  // --- merge ---
  auto* merge = app.add_subcommand("merge", "merge an RL adapter into the SFT weights");
  CommonArgs merge_args;
  std::string merge_sft, merge_adapter_path;
  double merge_scale_flag = -1.0;
  add_common(merge, merge_args);
  merge->add_option("--sft-ckpt", merge_sft, "SFT checkpoint")->required();
  merge->add_option("--adapter-ckpt", merge_adapter_path, "stage checkpoint holding the adapter")
      ->required();
  merge->add_option("--scale", merge_scale_flag, "merge scale (defaults to rl.merge_scale)");

  // --- plot ---
  auto* plot = app.add_subcommand("plot", "render a log column as an SVG curve");
  CommonArgs plot_args;
  std::string plot_log, plot_x = "step", plot_y = "loss", plot_out = "plot.svg";
  add_common(plot, plot_args);
  plot->add_option("--log", plot_log, "JSONL log file")->required();
  plot->add_option("--x", plot_x, "x column (default step)");
  plot->add_option("--y", plot_y, "comma-separated y columns (default loss)");
  plot->add_option("--out", plot_out, "output file name inside the run dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto cfg = build_config(synth_args);
      const auto dir = open_run_dir(synth_args, cfg, "synth-data");
      return run_guarded(dir, "synth-data", [&] {
        const auto sampler = sampler_from_config(cfg);
        const auto kinds = kinds_from_config(cfg);
        const int hr = static_cast<int>(cfg.get_int("data.hr_size"));
        const int ch = static_cast<int>(cfg.get_int("data.channels"));
        const auto n_pairs = cfg.get_int("data.n_pairs");
        const auto n_holdout = cfg.get_int("data.n_holdout");
        const auto n_unpaired = cfg.get_int("data.n_unpaired");
        const std::uint64_t s0 = static_cast<std::uint64_t>(cfg.get_int("master_seed")) << 20;

        const auto train = data::build_dataset(dir / "datasets" / "train",
                                               static_cast<int>(n_pairs), hr, ch, sampler, s0, kinds);
        const auto holdout = data::build_dataset(dir / "datasets" / "holdout",
                                                 static_cast<int>(n_holdout), hr, ch, sampler,
                                                 s0 + static_cast<std::uint64_t>(n_pairs), kinds);
        const auto unpaired = data::build_unpaired_lq(
            dir / "datasets" / "unpaired", static_cast<int>(n_unpaired), hr, ch, sampler,
            s0 + static_cast<std::uint64_t>(n_pairs + n_holdout), kinds);
        data::require_disjoint_seed_ranges(train, holdout);
        data::require_disjoint_seed_ranges(train, unpaired);
        data::require_disjoint_seed_ranges(holdout, unpaired);
      });
    }

    if (*tsft) {
      const auto cfg = build_config(tsft_args);
      const auto dir = open_run_dir(tsft_args, cfg, "train-sft");
      return run_guarded(dir, "train-sft", [&] {
        const auto manifest = data::load_manifest(tsft_data);
        std::optional<fs::path> resume;
        if (!tsft_resume.empty()) resume = tsft_resume;
        flow::train_sft(manifest, sft_from_config(cfg), dir, resume);
      });
    }

    if (*trl) {
      const auto cfg = build_config(trl_args);
      const auto dir = open_run_dir(trl_args, cfg, "train-rl-" + trl_stage);
      return run_guarded(dir, "train-rl", [&] {
        rl::RlStage stage;
        if (trl_stage == "fr") {
          stage = rl::RlStage::fr;
        } else if (trl_stage == "nr") {
          stage = rl::RlStage::nr;
        } else {
          throw InputError("train-rl: --stage expects fr|nr");
        }
        if (stage == rl::RlStage::nr && trl_init_adapter.empty()) {
          throw InputError("train-rl --stage nr: FR adapter required (--init-adapter)");
        }
        const auto base = model::load_checkpoint<float>(trl_base, arch_from_config(cfg));
        std::optional<model::LowRankAdapter<float>> init;
        if (!trl_init_adapter.empty()) {
          auto ck = model::load_checkpoint<float>(trl_init_adapter, arch_from_config(cfg));
          if (!ck.adapter) {
            throw InputError("train-rl: checkpoint " + trl_init_adapter + " holds no adapter");
          }
          init = std::move(*ck.adapter);
        }
        const auto manifest = data::load_manifest(trl_data);
        const auto scorer = scorer_from_config(cfg);
        rl::rl_train_stage(stage, base.model, init, manifest, *scorer, nft_from_config(cfg), dir);
      });
    }

    if (*annot) {
      const auto cfg = build_config(annot_args);
      const auto dir = open_run_dir(annot_args, cfg, "annotate");
      return run_guarded(dir, "annotate", [&] {
        const auto manifest = data::load_manifest(annot_data);
        const auto ck = model::load_checkpoint<float>(annot_ckpt, arch_from_config(cfg));
        const auto policy = policy_from_checkpoint(
            ck, static_cast<float>(cfg.get_double("rl.merge_scale")));
        const auto scorer = scorer_from_config(cfg);
        const int group_size = static_cast<int>(cfg.get_int("annotate.group_size"));
        std::size_t n = manifest.items.size();
        if (const auto cap = cfg.get_int("eval.max_items"); cap > 0) {
          n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
        }
        sampler::SampleConfig scfg;
        scfg.steps = static_cast<int>(cfg.get_int("sampler.train_steps"));
        scfg.initial_noise_scale = cfg.get_double("sampler.noise_scale");
        const fs::path records = dir / "annotations.jsonl";
        for (std::size_t i = 0; i < n; ++i) {
          model::ConditionTag<float> cond;
          cond.lr_image = data::upsample_cubic(data::load_lr(manifest, i), manifest.factor);
          cond.prompt_id = manifest.items[i].prompt_id;
          scfg.seed = derive_seed(static_cast<std::uint64_t>(cfg.get_int("master_seed")),
                                  0xa0000000ull + i);
          auto group = sampler::rollout_batch<float>(policy, nullptr, cond, group_size, scfg);
          for (auto& img : group) img = clamped01(img);
          reward::append_annotation_record(
              records, reward::annotate_group("item" + std::to_string(manifest.items[i].id),
                                              *scorer, group));
        }
      });
    }

    if (*eval) {
      const auto cfg = build_config(eval_args);
      const auto dir = open_run_dir(eval_args, cfg, "evaluate");
      return run_guarded(dir, "evaluate", [&] {
        const auto manifest = data::load_manifest(eval_data);
        const auto ck = model::load_checkpoint<float>(eval_ckpt, arch_from_config(cfg));
        const auto policy = policy_from_checkpoint(
            ck, static_cast<float>(cfg.get_double("rl.merge_scale")));
        const auto scorer = scorer_from_config(cfg);
        const auto evaluation = metrics::evaluate_policy(
            policy, manifest, infer_cfg_from_config(cfg), *scorer, cfg.get_double("reward.gamma"),
            static_cast<std::size_t>(cfg.get_int("eval.max_items")));
        std::vector<metrics::MetricReport> reports = {evaluation.policy};
        if (evaluation.baseline) reports.push_back(*evaluation.baseline);
        metrics::write_report_jsonl(dir / "report.jsonl", reports);
        std::ofstream table(dir / "table.txt");
        table << metrics::format_report_table(reports);
        std::cout << metrics::format_report_table(reports);
      });
    }

    if (*abl) {
      const auto cfg = build_config(abl_args);
      const auto dir = open_run_dir(abl_args, cfg, "ablate-" + abl_axis);
      return run_guarded(dir, "ablate", [&] {
        const auto base = model::load_checkpoint<float>(abl_base, arch_from_config(cfg));
        const auto sft = model::load_checkpoint<float>(abl_sft, arch_from_config(cfg));
        const auto train = data::load_manifest(abl_train);
        const auto unpaired = data::load_manifest(abl_unpaired);
        const auto eval_set = data::load_manifest(abl_eval);
        const auto scorer = scorer_from_config(cfg);

        std::vector<std::string> values;
        std::size_t pos = 0;
        while (pos < abl_values.size()) {
          std::size_t comma = abl_values.find(',', pos);
          if (comma == std::string::npos) comma = abl_values.size();
          values.push_back(abl_values.substr(pos, comma - pos));
          pos = comma + 1;
        }

        metrics::AblationInputs inputs;
        inputs.base_model = &base.model;
        inputs.sft_model = &sft.model;
        inputs.train_paired = &train;
        inputs.unpaired = &unpaired;
        inputs.eval_set = &eval_set;
        inputs.scorer = scorer.get();
        inputs.eval_sample_cfg = infer_cfg_from_config(cfg);
        inputs.merge_scale = static_cast<float>(cfg.get_double("rl.merge_scale"));
        inputs.eval_max_items = static_cast<std::size_t>(cfg.get_int("eval.max_items"));

        const auto cells =
            metrics::run_ablation_grid(abl_axis, values, inputs, nft_from_config(cfg), dir);
        std::ofstream table(dir / "ablation_table.txt");
        table << metrics::format_ablation_table(abl_axis, cells);
        std::cout << metrics::format_ablation_table(abl_axis, cells);

        std::ofstream rows(dir / "ablation.jsonl");
        for (const auto& cell : cells) {
          nlohmann::json j;
          j["axis"] = abl_axis;
          j["value"] = cell.value;
          j["mean_quality"] = cell.eval.policy.mean_quality;
          j["mean_fidelity_pred"] = cell.eval.policy.mean_fidelity_pred;
          if (cell.eval.policy.fr_available) {
            j["mean_psnr"] = cell.eval.policy.mean_psnr;
            j["mean_fidelity_ref"] = cell.eval.policy.mean_fidelity_ref;
          }
          rows << j.dump() << "\n";
        }
      });
    }

    if (*merge) {
      const auto cfg = build_config(merge_args);
      const auto dir = open_run_dir(merge_args, cfg, "merge");
      return run_guarded(dir, "merge", [&] {
        const auto sft = model::load_checkpoint<float>(merge_sft, arch_from_config(cfg));
        auto stage = model::load_checkpoint<float>(merge_adapter_path, arch_from_config(cfg));
        if (!stage.adapter) {
          throw InputError("merge: checkpoint " + merge_adapter_path + " holds no adapter");
        }
        const float scale = static_cast<float>(
            merge_scale_flag >= 0.0 ? merge_scale_flag : cfg.get_double("rl.merge_scale"));
        model::Checkpoint<float> out;
        out.model = rl::finalize_policy(sft.model, *stage.adapter, scale);
        out.stage = "MERGED";
        out.seed_lineage = sft.seed_lineage;
        out.parents = {merge_sft, merge_adapter_path};
        model::save_checkpoint(out, dir / "merged");
      });
    }

    if (*plot) {
      const auto cfg = build_config(plot_args);
      const auto dir = open_run_dir(plot_args, cfg, "plot");
      return run_guarded(dir, "plot", [&] {
        std::ifstream is(plot_log);
        if (!is) throw InputError("plot: cannot open log " + plot_log);
        std::vector<std::string> ys;
        std::size_t pos = 0;
        while (pos < plot_y.size()) {
          std::size_t comma = plot_y.find(',', pos);
          if (comma == std::string::npos) comma = plot_y.size();
          ys.push_back(plot_y.substr(pos, comma - pos));
          pos = comma + 1;
        }
        std::vector<metrics::Series> series(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) series[i].label = ys[i];
        std::string line;
        while (std::getline(is, line)) {
          if (line.empty()) continue;
          const auto row = nlohmann::json::parse(line);
          if (!row.contains(plot_x)) continue;
          for (std::size_t i = 0; i < ys.size(); ++i) {
            if (!row.contains(ys[i]) || !row[ys[i]].is_number()) continue;
            series[i].x.push_back(row[plot_x].get<double>());
            series[i].y.push_back(row[ys[i]].get<double>());
          }
        }
        metrics::write_svg_line_plot(dir / plot_out, fs::path(plot_log).filename().string(),
                                     plot_x, plot_y, series);
      });
    }
  } catch (const std::exception& e) {
    // configuration/setup failures before a run dir exists
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
