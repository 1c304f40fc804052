#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flowsr/core/errors.hpp"
#include "flowsr/model/checkpoint.hpp"

namespace flowsr::flow {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation over a list of parameter arrays. Moments are
// kept in double regardless of the parameter precision so resumed runs
// reproduce uninterrupted ones exactly.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  template <typename T>
  void init(const std::vector<std::pair<T*, std::size_t>>& params) {
    m_.clear();
    v_.clear();
    for (const auto& [ptr, n] : params) {
      (void)ptr;
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
    step_ = 0;
  }

  template <typename T>
  void step(const std::vector<std::pair<T*, std::size_t>>& params,
            const std::vector<std::vector<T>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw InputError("Adam::step: parameter/gradient block count mismatch");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      T* p = params[b].first;
      const std::size_t n = params[b].second;
      const T* g = grads[b].data();
      double* m = m_[b].data();
      double* v = v_[b].data();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  model::OptimizerStateBlob to_blob() const {
    model::OptimizerStateBlob blob;
    blob.step = step_;
    blob.m = m_;
    blob.v = v_;
    return blob;
  }

  void from_blob(const model::OptimizerStateBlob& blob) {
    step_ = blob.step;
    m_ = blob.m;
    v_ = blob.v;
  }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace flowsr::flow
