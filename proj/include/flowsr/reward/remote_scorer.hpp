#pragma once

#include <memory>
#include <string>

#include "flowsr/reward/scorer.hpp"

namespace flowsr::reward {

// Wire protocol for out-of-process scorers. One endpoint, POST /v1/score,
// JSON body:
//   { "mode": "quality" | "fidelity" | "compare",
//     "image": {"h":..,"w":..,"c":..,"data":[floats]},
//     "reference": {...}   // fidelity/compare only
//   }
// Response: {"q": float} | {"f": float} | {"outcome": "first"|"second"|"tie"}.
// Requests are retried `retries` times on transport errors before failing.
class RemoteScorer : public ScorerInterface {
 public:
  RemoteScorer(std::string host, int port, int timeout_ms = 5000, int retries = 2);
  ~RemoteScorer() override;

  double quality(const ImageF& img) const override;
  double fidelity(const ImageF& img, const ImageF& reference) const override;
  CompareOutcome compare(const ImageF& a, const ImageF& b) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// In-process HTTP server exposing a local ScorerInterface over the same
// protocol; binds an ephemeral loopback port. Used for protocol tests and as
// a reference for real deployments.
class LoopbackScorerServer {
 public:
  explicit LoopbackScorerServer(const ScorerInterface& scorer);
  ~LoopbackScorerServer();

  int port() const;
  const std::string& host() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flowsr::reward
