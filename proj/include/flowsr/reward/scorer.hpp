#pragma once

#include <memory>
#include <string>

#include "flowsr/core/image.hpp"
#include "flowsr/reward/fidelity.hpp"
#include "flowsr/reward/quality.hpp"

namespace flowsr::reward {

enum class CompareOutcome { first, second, tie };

// Pluggable scorer surface. Implementations must be deterministic and total
// on valid images; the RL loop and the annotation pipeline only touch this
// interface, so a remote scorer can be swapped in without changing either.
class ScorerInterface {
 public:
  virtual ~ScorerInterface() = default;

  virtual double quality(const ImageF& img) const = 0;
  virtual double fidelity(const ImageF& img, const ImageF& reference) const = 0;
  virtual CompareOutcome compare(const ImageF& a, const ImageF& b) const = 0;
};

// Default scorer: proxy quality + structural fidelity, with the comparator
// defined as the sign of the quality difference under a tie margin.
class LocalProxyScorer : public ScorerInterface {
 public:
  LocalProxyScorer() = default;
  LocalProxyScorer(QualityConstants qk, FidelityConstants fk, double tie_margin)
      : qk_(qk), fk_(fk), tie_margin_(tie_margin) {}

  double quality(const ImageF& img) const override { return proxy_quality(img, qk_); }

  double fidelity(const ImageF& img, const ImageF& reference) const override {
    return fidelity_from_reference(img, reference, fk_);
  }

  CompareOutcome compare(const ImageF& a, const ImageF& b) const override {
    const double d = quality(a) - quality(b);
    if (d > tie_margin_) return CompareOutcome::first;
    if (d < -tie_margin_) return CompareOutcome::second;
    return CompareOutcome::tie;
  }

  double tie_margin() const { return tie_margin_; }

 private:
  QualityConstants qk_{};
  FidelityConstants fk_{};
  double tie_margin_ = 0.05;
};

}  // namespace flowsr::reward
