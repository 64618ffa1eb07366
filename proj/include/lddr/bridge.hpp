// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "lddr/config.hpp"
#include "lddr/layers.hpp"
#include "lddr/mllm.hpp"

namespace lddr {

struct TapPair {
  int dit_layer;   ///< 1-based
  int mllm_layer;  ///< 1-based
  friend bool operator==(const TapPair&, const TapPair&) = default;
};

/// DiT layer i (1..n) reads the query states of MLLM layer m - n + i.
struct TapSchedule {
  int m = 0;
  int n = 0;
  std::vector<TapPair> pairs;
};

/// Throws ConfigError when m < n or n < 1.
TapSchedule tap_schedule(int m, int n);

/// Two affine layers with a GELU between them, applied row-wise.
template <typename T>
struct Connector {
  Linear<T> fc1;
  Linear<T> fc2;

  Connector() = default;
  /// fc2 starts at zero, so every condition is initially the bias b2 = 0.
  Connector(const std::string& name, std::size_t d_mllm, std::size_t d_hid, std::size_t d_dit,
            Rng& rng)
      : fc1(name + ".fc1", d_mllm, d_hid, rng), fc2(name + ".fc2", d_hid, d_dit, rng, 0.0) {}

  Var<T> operator()(Graph<T>& g, Var<T> h) const;
  void collect(std::vector<BasicParam<T>*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
  static std::size_t param_count(std::size_t d_mllm, std::size_t d_hid, std::size_t d_dit) {
    return d_mllm * d_hid + d_hid + d_hid * d_dit + d_dit;
  }
};

/// Per-DiT-layer conditions for one prompt. Entries live in the graph that
/// built them.
template <typename T>
struct ConditionStack {
  std::vector<Var<T>> entries;     ///< entry i-1 feeds DiT layer i, each [N x d_dit]
  std::vector<int> source_layers;  ///< MLLM layer of each entry
  std::uint64_t prompt_digest = 0;
};

/// Graph-independent copy of a ConditionStack, reusable across sampler steps.
template <typename T>
struct CachedStack {
  std::vector<BasicTensor<T>> entries;
  std::vector<int> source_layers;
  std::uint64_t prompt_digest = 0;

  static CachedStack from(const ConditionStack<T>& stack);
  /// Re-enters the cached values into `g` as constants.
  ConditionStack<T> bind(Graph<T>& g) const;
};

/// Learnable queries plus the connectors between MLLM and DiT.
template <typename T>
class LadderBridge {
 public:
  LadderBridge(const RunConfig& cfg, Rng& rng);

  BridgeMode mode() const { return mode_; }
  const TapSchedule& schedule() const { return schedule_; }
  /// MLLM layer feeding DiT layer i (1-based) in the configured mode.
  int source_layer(int dit_layer) const;
  /// Strictly increasing MLLM layers that forward_collect must record.
  std::vector<int> collected_layers() const;

  /// Query set Q, [N x d_mllm].
  BasicParam<T>& queries() { return queries_; }
  std::vector<Connector<T>>& connectors() { return connectors_; }

  /// One forward_collect pass, then entry i = connector_i(states[source_layer(i)]).
  ConditionStack<T> build(Graph<T>& g, ToyMllm<T>& mllm, const PromptSequence& seq);

  std::vector<BasicParam<T>*> params();
  /// Every bridge weight, queries included.
  std::size_t param_count();
  /// Connector weights only, walked from the Params.
  std::size_t connector_param_count();

 private:
  const Connector<T>& connector_for(int dit_layer) const;

  BridgeMode mode_;
  TapSchedule schedule_;
  BasicParam<T> queries_;
  std::vector<Connector<T>> connectors_;
};

}  // namespace lddr
