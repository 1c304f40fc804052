#include "flowsr/metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowsr/core/errors.hpp"
#include "flowsr/data/degrade.hpp"
#include "flowsr/metrics/metrics.hpp"
#include "flowsr/reward/composite.hpp"

namespace flowsr::metrics {

void MetricReport::finalize_aggregates() {
  const double n = static_cast<double>(rows.size());
  mean_psnr = mean_ssim = mean_fidelity_ref = mean_fidelity_pred = 0.0;
  mean_quality = mean_reward_ref = mean_reward_pred = 0.0;
  for (const auto& r : rows) {
    if (fr_available) {
      mean_psnr += r.psnr_db / n;
      mean_ssim += r.ssim / n;
      mean_fidelity_ref += r.fidelity_ref / n;
      mean_reward_ref += r.reward_ref / n;
    }
    mean_fidelity_pred += r.fidelity_pred / n;
    mean_quality += r.quality / n;
    mean_reward_pred += r.reward_pred / n;
  }
}

MetricReport evaluate_images(const std::string& method, const std::vector<ImageF>& sr_images,
                             const data::DatasetManifest& dataset,
                             const reward::ScorerInterface& scorer, double gamma,
                             std::size_t n_items) {
  if (n_items == 0 || n_items > sr_images.size()) n_items = sr_images.size();
  if (n_items == 0) throw InputError("evaluate_images: empty image list");
  MetricReport report;
  report.method = method;
  report.fr_available = dataset.paired;

  for (std::size_t i = 0; i < n_items; ++i) {
    const ImageF sr = clamped01(sr_images[i]);
    const ImageF lr = data::load_lr(dataset, i);
    MetricRow row;
    row.item_id = dataset.items[i].id;
    row.has_fr = dataset.paired;

    const auto pred =
        reward::compass_evaluate(lr, sr, nullptr, scorer, gamma, reward::FidelityMode::predicted);
    row.fidelity_pred = pred.fidelity;
    row.quality = pred.q_sr;
    row.reward_pred = pred.reward;

    if (dataset.paired) {
      const ImageF gt = data::load_pair(dataset, i).x_hr;
      row.psnr_db = psnr(sr, gt);
      row.ssim = ssim(sr, gt);
      const auto ref =
          reward::compass_evaluate(lr, sr, &gt, scorer, gamma, reward::FidelityMode::reference);
      row.fidelity_ref = ref.fidelity;
      row.reward_ref = ref.reward;
    }
    report.rows.push_back(row);
  }
  report.finalize_aggregates();
  return report;
}

PolicyEvaluation evaluate_policy(const model::VelocityModel<float>& policy,
                                 const data::DatasetManifest& dataset,
                                 const sampler::SampleConfig& sample_cfg,
                                 const reward::ScorerInterface& scorer, double gamma,
                                 std::size_t max_items) {
  if (dataset.items.empty()) throw InputError("evaluate_policy: empty dataset");
  std::size_t n = dataset.items.size();
  if (max_items > 0) n = std::min(n, max_items);

  std::vector<ImageF> sr, baseline;
  sr.reserve(n);
  baseline.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    model::ConditionTag<float> cond;
    const ImageF lr = data::load_lr(dataset, i);
    cond.lr_image = data::upsample_cubic(lr, dataset.factor);
    cond.prompt_id = dataset.items[i].prompt_id;
    sampler::SampleConfig cfg = sample_cfg;
    cfg.seed = derive_seed(sample_cfg.seed, 0xeba1ull + i);
    sr.push_back(sampler::sample<float>(policy, nullptr, cond, cfg));
    baseline.push_back(cond.lr_image);
  }

  PolicyEvaluation out;
  out.policy = evaluate_images("policy", sr, dataset, scorer, gamma, n);
  if (dataset.paired) {
    out.baseline = evaluate_images("bicubic", baseline, dataset, scorer, gamma, n);
  }
  return out;
}

namespace {

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

void write_report_jsonl(const std::filesystem::path& path,
                        const std::vector<MetricReport>& reports) {
  std::ofstream os(path);
  if (!os) throw InputError("write_report_jsonl: cannot open " + path.string());
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      nlohmann::json j;
      j["method"] = rep.method;
      j["item"] = r.item_id;
      if (r.has_fr) {
        j["psnr_db"] = number_or_inf(r.psnr_db);
        j["ssim"] = r.ssim;
        j["fidelity_ref"] = r.fidelity_ref;
        j["reward_ref"] = r.reward_ref;
      }
      j["fidelity_pred"] = r.fidelity_pred;
      j["quality"] = r.quality;
      j["reward_pred"] = r.reward_pred;
      os << j.dump() << "\n";
    }
    nlohmann::json agg;
    agg["method"] = rep.method;
    agg["aggregate"] = true;
    if (rep.fr_available) {
      agg["psnr_db"] = number_or_inf(rep.mean_psnr);
      agg["ssim"] = rep.mean_ssim;
      agg["fidelity_ref"] = rep.mean_fidelity_ref;
      agg["reward_ref"] = rep.mean_reward_ref;
    }
    agg["fidelity_pred"] = rep.mean_fidelity_pred;
    agg["quality"] = rep.mean_quality;
    agg["reward_pred"] = rep.mean_reward_pred;
    os << agg.dump() << "\n";
  }
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "# FR metrics: psnr/ssim vs ground truth. F/Q/R are in-repo proxies\n";
  os << "# (structural fidelity, no-reference quality, composite reward).\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %8s %8s %8s %8s\n", "method", "psnr",
                "ssim", "F_ref", "F_pred", "Q", "R_ref", "R_pred");
  os << line;
  for (const auto& rep : reports) {
    auto num = [](double v) {
      char buf[32];
      if (std::isinf(v)) {
        std::snprintf(buf, sizeof(buf), "%8s", "inf");
      } else {
        std::snprintf(buf, sizeof(buf), "%8.4f", v);
      }
      return std::string(buf);
    };
    const std::string na = "     n/a";
    os << std::left;
    std::snprintf(line, sizeof(line), "%-12s %s %s %s %s %s %s %s\n", rep.method.c_str(),
                  (rep.fr_available ? num(rep.mean_psnr) : na).c_str(),
                  (rep.fr_available ? num(rep.mean_ssim) : na).c_str(),
                  (rep.fr_available ? num(rep.mean_fidelity_ref) : na).c_str(),
                  num(rep.mean_fidelity_pred).c_str(), num(rep.mean_quality).c_str(),
                  (rep.fr_available ? num(rep.mean_reward_ref) : na).c_str(),
                  num(rep.mean_reward_pred).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace flowsr::metrics
