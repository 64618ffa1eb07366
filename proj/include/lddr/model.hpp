// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "lddr/bridge.hpp"
#include "lddr/config.hpp"
#include "lddr/dit.hpp"
#include "lddr/flow.hpp"
#include "lddr/mllm.hpp"

namespace lddr {

/// Frozen MLLM, bridge and DiT built from one RunConfig. Param names are
/// prefixed "mllm.", "bridge." and "dit.".
template <typename T>
class LadderModel {
 public:
  /// Random initialization from cfg.seed; the MLLM is frozen immediately.
  explicit LadderModel(const RunConfig& cfg);

  const RunConfig& config() const { return cfg_; }
  ToyMllm<T>& mllm() { return mllm_; }
  LadderBridge<T>& bridge() { return bridge_; }
  DitGenerator<T>& dit() { return dit_; }

  std::vector<BasicParam<T>*> all_params();
  std::vector<BasicParam<T>*> trainable_params();
  std::vector<BasicParam<T>*> mllm_params() { return mllm_.params(); }

  ConditionStack<T> condition(Graph<T>& g, const PromptSequence& seq) {
    return bridge_.build(g, mllm_, seq);
  }
  Var<T> velocity(Graph<T>& g, Var<T> x_t, double t, const ConditionStack<T>& stack,
                  DitProbe<T>* probe = nullptr) {
    return dit_.forward(g, x_t, t, stack, probe);
  }
  /// Flow-matching loss of one (prompt, sample) pair.
  Var<T> loss(Graph<T>& g, const PromptSequence& seq, const FlowSample<T>& sample);

  /// Copies every value (and trainable flag) from a model of another precision.
  template <typename U>
  void copy_from(LadderModel<U>& other) {
    copy_param_values(all_params(), other.all_params());
  }

 private:
  RunConfig cfg_;
  Rng init_rng_;
  ToyMllm<T> mllm_;
  LadderBridge<T> bridge_;
  DitGenerator<T> dit_;
};

/// [<bos> words...]; the empty word list gives the null prompt.
PromptSequence text_prompt(const TokenIds& words);
/// [<bos> instruction...] followed by the source image patches.
PromptSequence edit_prompt(const TokenIds& instruction, const Tensor& signed_source);

/// Conditions once, then integrates from noise drawn from
/// (sampler.seed, index). With guidance != 1 the null prompt's stack is
/// mixed in. `rebuild_each_step` recomputes the stack at every step.
Tensor sample_image(LadderModel<float>& model, const PromptSequence& prompt,
                    const SamplerConfig& sampler, std::uint64_t index = 0,
                    bool rebuild_each_step = false);

/// The noise sample_image starts from.
Tensor sampler_noise(const LadderModel<float>& model, const SamplerConfig& sampler,
                     std::uint64_t index);

/// FNV-1a over the names and raw values of `params`.
template <typename T>
std::uint64_t param_checksum(const std::vector<BasicParam<T>*>& params);

}  // namespace lddr
