#include "flowsr/reward/annotate.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "flowsr/core/errors.hpp"

namespace flowsr::reward {

std::vector<double> anchor_scores(const ScorerInterface& scorer,
                                  const std::vector<ImageF>& images) {
  if (images.empty()) throw InputError("anchor_scores: empty image list");
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(scorer.quality(img));
  return out;
}

std::vector<PairOutcome> pairwise_outcomes(const ScorerInterface& scorer,
                                           const std::vector<ImageF>& sr_list) {
  const std::size_t n = sr_list.size();
  if (n < 2) throw InputError("pairwise_outcomes: need at least 2 candidates");
  std::vector<PairOutcome> m(n * n, PairOutcome::self);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const CompareOutcome fwd = scorer.compare(sr_list[i], sr_list[j]);
      const CompareOutcome rev = scorer.compare(sr_list[j], sr_list[i]);
      const bool consistent = (fwd == CompareOutcome::tie && rev == CompareOutcome::tie) ||
                              (fwd == CompareOutcome::first && rev == CompareOutcome::second) ||
                              (fwd == CompareOutcome::second && rev == CompareOutcome::first);
      if (!consistent) {
        throw AnnotationError("pairwise_outcomes: comparator disagrees with itself on pair (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
      }
      if (fwd == CompareOutcome::tie) {
        m[i * n + j] = PairOutcome::tie;
        m[j * n + i] = PairOutcome::tie;
      } else if (fwd == CompareOutcome::first) {
        m[i * n + j] = PairOutcome::win;
        m[j * n + i] = PairOutcome::loss;
      } else {
        m[i * n + j] = PairOutcome::loss;
        m[j * n + i] = PairOutcome::win;
      }
    }
  }
  return m;
}

std::vector<double> rank_from_outcomes(const std::vector<PairOutcome>& outcomes, std::size_t n) {
  if (n < 2 || outcomes.size() != n * n) {
    throw InputError("rank_from_outcomes: malformed outcome matrix");
  }
  // Copeland tally: wins + 0.5 * ties against the N-1 opponents
  std::vector<double> tally(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (outcomes[i * n + j] == PairOutcome::win) tally[i] += 1.0;
      if (outcomes[i * n + j] == PairOutcome::tie) tally[i] += 0.5;
    }
  }
  double lo = tally[0], hi = tally[0];
  for (double t : tally) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  std::vector<double> r(n, 0.5);
  if (hi > lo) {
    for (std::size_t i = 0; i < n; ++i) r[i] = (tally[i] - lo) / (hi - lo);
  }
  return r;
}

std::vector<double> pairwise_rank(const ScorerInterface& scorer,
                                  const std::vector<ImageF>& sr_list) {
  return rank_from_outcomes(pairwise_outcomes(scorer, sr_list), sr_list.size());
}

CalibrationResult calibrate(const std::vector<double>& rank_scores,
                            const std::vector<double>& anchors) {
  const std::size_t n = rank_scores.size();
  if (n < 2 || anchors.size() != n) {
    throw InputError("calibrate: need matching lists of length >= 2");
  }
  double mean_r = 0.0, mean_q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_r += rank_scores[i];
    mean_q += anchors[i];
  }
  mean_r /= static_cast<double>(n);
  mean_q /= static_cast<double>(n);

  double cov = 0.0, var_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dr = rank_scores[i] - mean_r;
    cov += dr * (anchors[i] - mean_q);
    var_r += dr * dr;
  }

  CalibrationResult out;
  if (var_r == 0.0) {
    out.alpha = 0.0;
    out.beta = mean_q;
  } else {
    out.alpha = cov / var_r;
    out.beta = mean_q - out.alpha * mean_r;
  }
  out.q_hat.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.q_hat.push_back(std::clamp(out.alpha * rank_scores[i] + out.beta, 1.0, 5.0));
  }
  return out;
}

AnnotationGroup annotate_group(const std::string& group_id, const ScorerInterface& scorer,
                               const std::vector<ImageF>& sr_list) {
  AnnotationGroup g;
  g.group_id = group_id;
  g.anchor_scores = anchor_scores(scorer, sr_list);
  g.outcomes = pairwise_outcomes(scorer, sr_list);
  g.rank_scores = rank_from_outcomes(g.outcomes, sr_list.size());
  const CalibrationResult cal = calibrate(g.rank_scores, g.anchor_scores);
  g.alpha = cal.alpha;
  g.beta = cal.beta;
  g.q_hat = cal.q_hat;
  g.alpha_negative = cal.alpha < 0.0;
  return g;
}

void append_annotation_record(const std::filesystem::path& path, const AnnotationGroup& group) {
  nlohmann::json j;
  j["group_id"] = group.group_id;
  j["anchor_scores"] = group.anchor_scores;
  std::string flat;
  flat.reserve(group.outcomes.size());
  for (PairOutcome o : group.outcomes) flat.push_back(static_cast<char>(o));
  j["outcomes"] = flat;
  j["rank_scores"] = group.rank_scores;
  j["alpha"] = group.alpha;
  j["beta"] = group.beta;
  j["q_hat"] = group.q_hat;
  j["alpha_negative"] = group.alpha_negative;

  std::ofstream os(path, std::ios::app);
  if (!os) throw InputError("append_annotation_record: cannot open " + path.string());
  os << j.dump() << "\n";
}

}  // namespace flowsr::reward
