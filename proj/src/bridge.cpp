// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/bridge.hpp"

#include <string>

namespace lddr {

TapSchedule tap_schedule(int m, int n) {
  if (n < 1) throw ConfigError({"tap schedule requires n >= 1, got n = " + std::to_string(n)});
  if (m < n) {
    throw ConfigError({"tap schedule requires m >= n (DiT layer i reads MLLM layer m - n + i), got m = " +
                       std::to_string(m) + ", n = " + std::to_string(n)});
  }
  TapSchedule s;
  s.m = m;
  s.n = n;
  for (int i = 1; i <= n; ++i) s.pairs.push_back({i, m - n + i});
  return s;
}

template <typename T>
Var<T> Connector<T>::operator()(Graph<T>& g, Var<T> h) const {
  auto& self = const_cast<Connector<T>&>(*this);
  if (h.value().rank() != 2 || h.value().cols() != fc1.w.value.dim(0)) {
    throw DimensionError("connector expects width " + std::to_string(fc1.w.value.dim(0)) +
                         ", got " + shape_str(h.value().shape()));
  }
  return self.fc2(g, gelu(self.fc1(g, h)));
}

template <typename T>
CachedStack<T> CachedStack<T>::from(const ConditionStack<T>& stack) {
  CachedStack<T> c;
  for (const auto& e : stack.entries) c.entries.push_back(e.value());
  c.source_layers = stack.source_layers;
  c.prompt_digest = stack.prompt_digest;
  return c;
}

template <typename T>
ConditionStack<T> CachedStack<T>::bind(Graph<T>& g) const {
  ConditionStack<T> s;
  for (const auto& e : entries) s.entries.push_back(g.constant(e));
  s.source_layers = source_layers;
  s.prompt_digest = prompt_digest;
  return s;
}

template <typename T>
LadderBridge<T>::LadderBridge(const RunConfig& cfg, Rng& rng)
    : mode_(cfg.bridge.mode), schedule_(tap_schedule(cfg.mllm.layers, cfg.dit.layers)) {
  const auto d_mllm = static_cast<std::size_t>(cfg.mllm.width);
  const auto d_hid = static_cast<std::size_t>(cfg.connector_hidden());
  const auto d_dit = static_cast<std::size_t>(cfg.dit.width);
  queries_ = BasicParam<T>(
      "bridge.queries",
      normal_tensor<T>({static_cast<std::size_t>(cfg.bridge.queries), d_mllm}, rng,
                       cfg.bridge.query_init_std));
  const int count = mode_ == BridgeMode::kSharedConnector ? 1 : cfg.dit.layers;
  for (int i = 1; i <= count; ++i) {
    connectors_.emplace_back("bridge.connector" + std::to_string(i), d_mllm, d_hid, d_dit, rng);
  }
}

template <typename T>
int LadderBridge<T>::source_layer(int dit_layer) const {
  if (dit_layer < 1 || dit_layer > schedule_.n) {
    throw std::out_of_range("DiT layer " + std::to_string(dit_layer) + " outside 1.." +
                            std::to_string(schedule_.n));
  }
  if (mode_ == BridgeMode::kFinalLayerOnly) return schedule_.m;
  return schedule_.pairs[static_cast<std::size_t>(dit_layer - 1)].mllm_layer;
}

template <typename T>
std::vector<int> LadderBridge<T>::collected_layers() const {
  if (mode_ == BridgeMode::kFinalLayerOnly) return {schedule_.m};
  std::vector<int> layers;
  for (const auto& p : schedule_.pairs) layers.push_back(p.mllm_layer);
  return layers;
}

template <typename T>
const Connector<T>& LadderBridge<T>::connector_for(int dit_layer) const {
  if (mode_ == BridgeMode::kSharedConnector) return connectors_.front();
  return connectors_[static_cast<std::size_t>(dit_layer - 1)];
}

template <typename T>
ConditionStack<T> LadderBridge<T>::build(Graph<T>& g, ToyMllm<T>& mllm, const PromptSequence& seq) {
  const auto emb = mllm.embed_prompt(g, seq, g.param(queries_));
  const auto taps = collected_layers();
  const LayerStates<T> states = mllm.forward_collect(emb, taps);
  ConditionStack<T> stack;
  stack.prompt_digest = seq.digest();
  for (int i = 1; i <= schedule_.n; ++i) {
    const int src = source_layer(i);
    stack.entries.push_back(connector_for(i)(g, states.at(src)));
    stack.source_layers.push_back(src);
  }
  return stack;
}

template <typename T>
std::vector<BasicParam<T>*> LadderBridge<T>::params() {
  std::vector<BasicParam<T>*> out{&queries_};
  for (auto& c : connectors_) c.collect(out);
  return out;
}

template <typename T>
std::size_t LadderBridge<T>::param_count() {
  std::size_t total = 0;
  for (auto* p : params()) total += p->value.size();
  return total;
}

template <typename T>
std::size_t LadderBridge<T>::connector_param_count() {
  std::vector<BasicParam<T>*> ps;
  for (auto& c : connectors_) c.collect(ps);
  std::size_t total = 0;
  for (auto* p : ps) total += p->value.size();
  return total;
}

template struct Connector<float>;
template struct Connector<double>;
template struct CachedStack<float>;
template struct CachedStack<double>;
template class LadderBridge<float>;
template class LadderBridge<double>;

}  // namespace lddr
