#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowsr/core/image.hpp"
#include "flowsr/reward/scorer.hpp"

namespace flowsr::reward {

// Three-stage perceptual annotation of a group of SR candidates sharing one
// LR input: global anchor scoring, exhaustive pairwise ranking, rank-guided
// linear calibration.

enum class PairOutcome : char { win = 'w', loss = 'l', tie = 't', self = 's' };

struct CalibrationResult {
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> q_hat;  // calibrated scores clamped to [1,5]
};

struct AnnotationGroup {
  std::string group_id;
  std::vector<double> anchor_scores;      // stage 1
  std::vector<PairOutcome> outcomes;      // stage 2, row-major N x N
  std::vector<double> rank_scores;        // stage 2 aggregate, in [0,1]
  double alpha = 0.0, beta = 0.0;         // stage 3
  std::vector<double> q_hat;
  bool alpha_negative = false;            // flagged, not rejected

  std::size_t size() const { return anchor_scores.size(); }
};

// Stage 1: elementwise, order-preserving quality scores.
std::vector<double> anchor_scores(const ScorerInterface& scorer, const std::vector<ImageF>& images);

// Stage 2: full N x N outcome matrix followed by a min-max-normalized
// Copeland tally (wins + 0.5 * ties). A cycle or an all-tie group collapses
// to r = 0.5 everywhere. Both orientations of every pair are evaluated;
// inconsistent comparator answers raise AnnotationError.
std::vector<PairOutcome> pairwise_outcomes(const ScorerInterface& scorer,
                                           const std::vector<ImageF>& sr_list);
std::vector<double> rank_from_outcomes(const std::vector<PairOutcome>& outcomes, std::size_t n);
std::vector<double> pairwise_rank(const ScorerInterface& scorer, const std::vector<ImageF>& sr_list);

// Stage 3: ordinary least squares of anchors on ranks,
//   alpha = cov(r, q) / var(r),  beta = mean(q) - alpha * mean(r),
// with the degenerate var(r) = 0 case pinned to (alpha=0, beta=mean(q)).
// q_hat is clamped to [1,5] after the affine map.
CalibrationResult calibrate(const std::vector<double>& rank_scores,
                            const std::vector<double>& anchors);

AnnotationGroup annotate_group(const std::string& group_id, const ScorerInterface& scorer,
                               const std::vector<ImageF>& sr_list);

// One JSONL record per group: ids, anchors, flattened outcomes, r, alpha,
// beta, q_hat, alpha_negative flag.
void append_annotation_record(const std::filesystem::path& path, const AnnotationGroup& group);

}  // namespace flowsr::reward
