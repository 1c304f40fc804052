#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsr/core/image.hpp"
#include "flowsr/data/dataset.hpp"
#include "flowsr/model/velocity_model.hpp"
#include "flowsr/reward/scorer.hpp"
#include "flowsr/sampler/sampler.hpp"

namespace flowsr::metrics {

// Per-image metric record. Full-reference fields are only meaningful when
// has_fr is set; GT-free datasets leave them absent rather than zero-filled.
struct MetricRow {
  std::uint64_t item_id = 0;
  bool has_fr = false;
  double psnr_db = 0.0;  // +infinity when the images are identical
  double ssim = 0.0;
  double fidelity_ref = 0.0;   // F against GT (reference mode)
  double fidelity_pred = 0.0;  // F against upsampled LR (predicted mode)
  double quality = 0.0;        // proxy Q of the SR output
  double reward_ref = 0.0;     // composite reward, reference fidelity
  double reward_pred = 0.0;    // composite reward, predicted fidelity
};

struct MetricReport {
  std::string method;
  bool fr_available = false;
  std::vector<MetricRow> rows;

  // aggregates are arithmetic means over rows (infinities propagate)
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_fidelity_ref = 0.0;
  double mean_fidelity_pred = 0.0;
  double mean_quality = 0.0;
  double mean_reward_ref = 0.0;
  double mean_reward_pred = 0.0;

  void finalize_aggregates();
};

struct PolicyEvaluation {
  MetricReport policy;
  std::optional<MetricReport> baseline;  // cubic upsample; present for paired datasets
};

// Scores a list of SR outputs (one per dataset item, aligned by index).
MetricReport evaluate_images(const std::string& method, const std::vector<ImageF>& sr_images,
                             const data::DatasetManifest& dataset,
                             const reward::ScorerInterface& scorer, double gamma,
                             std::size_t n_items);

// Samples the policy over the dataset and reports metrics; paired datasets
// additionally get the cubic-upsample baseline row. max_items == 0 means all.
PolicyEvaluation evaluate_policy(const model::VelocityModel<float>& policy,
                                 const data::DatasetManifest& dataset,
                                 const sampler::SampleConfig& sample_cfg,
                                 const reward::ScorerInterface& scorer, double gamma,
                                 std::size_t max_items = 0);

// Machine-readable records: one JSON line per (method, item) plus one
// aggregate line per method.
void write_report_jsonl(const std::filesystem::path& path,
                        const std::vector<MetricReport>& reports);

// Human-readable aligned table. Proxy columns are marked as such.
std::string format_report_table(const std::vector<MetricReport>& reports);

}  // namespace flowsr::metrics
