// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "lddr/bridge.hpp"
#include "lddr/config.hpp"
#include "lddr/layers.hpp"

namespace lddr {

/// Sinusoidal features of 1000 t: sin in the first half, cos in the second.
/// Throws std::invalid_argument for t outside [0, 1] or odd `dim`.
template <typename T>
BasicTensor<T> sinusoidal_embedding(double t, int dim);

template <typename T>
struct DitBlock {
  LayerNorm<T> ln1;
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> ln2;
  MultiHeadAttention<T> cross_attn;
  LayerNorm<T> ln3;
  Mlp<T> mlp;
};

/// Intermediate activations recorded by DitGenerator::forward.
template <typename T>
struct DitProbe {
  std::vector<BasicTensor<T>> cross_out;  ///< cross-attention output of block i
  std::vector<BasicTensor<T>> block_out;  ///< residual stream after block i
};

/// Pixel-space diffusion transformer. Block i: self-attention, then
/// cross-attention over condition entry i, then MLP, all pre-norm residual.
template <typename T>
class DitGenerator {
 public:
  DitGenerator(const DitConfig& cfg, Rng& rng);

  const DitConfig& config() const { return cfg_; }
  std::vector<BasicParam<T>*> params();

  /// Projected timestep embedding, [d_dit].
  Var<T> timestep_embed(Graph<T>& g, double t);

  /// Velocity prediction with the shape of `x_t`. Throws ConfigError when the
  /// stack length differs from n.
  Var<T> forward(Graph<T>& g, Var<T> x_t, double t, const ConditionStack<T>& stack,
                 DitProbe<T>* probe = nullptr);

  /// Cross-attention of block `layer` (1-based) alone on a given input.
  Var<T> cross_attention(Graph<T>& g, int layer, Var<T> tokens, const ConditionStack<T>& stack);

 private:
  DitConfig cfg_;
  std::vector<std::uint32_t> to_patches_;
  std::vector<std::uint32_t> from_patches_;
  Linear<T> patch_in_;
  BasicParam<T> pos_emb_;
  Linear<T> t_fc1_;
  Linear<T> t_fc2_;
  std::vector<DitBlock<T>> blocks_;
  LayerNorm<T> ln_f_;
  Linear<T> patch_out_;
};

}  // namespace lddr
