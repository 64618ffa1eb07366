// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lddr/config.hpp"
#include "lddr/graph.hpp"

namespace lddr {

/// Adam with decoupled weight decay. Moments are held only for trainable
/// params, keyed by param name; frozen params are never read or written.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from Param::grad at learning rate `lr`.
  void step(const std::vector<Param*>& params, double lr) {
    ++applied_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(applied_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(applied_));
    const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    for (Param* p : params) {
      if (!p->trainable) continue;
      auto& [m, v] = moments_for(*p);
      float* w = p->value.data();
      const float* g = p->grad.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i];
        w[i] = static_cast<float>(w[i] - lr * update);
      }
    }
  }

  long applied_steps() const { return applied_; }
  void set_applied_steps(long n) { applied_ = n; }
  const OptimizerConfig& config() const { return cfg_; }

  /// name -> (first moment, second moment)
  std::map<std::string, std::pair<Tensor, Tensor>>& moments() { return moments_; }
  const std::map<std::string, std::pair<Tensor, Tensor>>& moments() const { return moments_; }

 private:
  std::pair<Tensor, Tensor>& moments_for(const Param& p) {
    auto it = moments_.find(p.name);
    if (it == moments_.end()) {
      it = moments_.emplace(p.name, std::make_pair(Tensor(p.value.shape()), Tensor(p.value.shape())))
               .first;
    }
    return it->second;
  }

  OptimizerConfig cfg_;
  long applied_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace lddr
