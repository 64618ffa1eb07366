// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lddr/graph.hpp"

namespace lddr {

/// Boolean attend/ignore matrix for attention; allow[i * cols + j] != 0 means
/// query i may attend to key j. Ignored positions get a -1e9 logit bias.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allow;

  /// Query i sits at absolute position offset + i and sees keys 0..offset+i.
  static AttentionMask causal(std::size_t rows, std::size_t cols, std::size_t offset = 0);
  bool allowed(std::size_t i, std::size_t j) const { return allow[i * cols + j] != 0; }
};

inline constexpr double kMaskBias = -1e9;

// Dense layers. Inputs of rank >= 2 are treated as (rows x last-dim) matrices.

/// out = x * W + b, W is [d_in x d_out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T s);

/// x[r, :] + v for every row r; v has x's last dimension.
template <typename T>
Var<T> add_row_vector(Var<T> x, Var<T> v);

/// Tanh-approximated GELU.
template <typename T>
Var<T> gelu(Var<T> x);

/// Normalizes each row to zero mean / unit variance, then applies gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

/// Scaled dot-product attention over [..., S, d] queries and [..., T, d] keys.
/// Leading dimensions are flattened into independent (batch, head) slices.
/// Throws if a mask row allows no key.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionMask* mask = nullptr);

/// Attention probabilities for inspection, shape [..., S, T]. No gradient.
template <typename T>
BasicTensor<T> attention_probs(const BasicTensor<T>& q, const BasicTensor<T>& k,
                               const AttentionMask* mask = nullptr);

/// [S x H*dh] -> [H x S x dh].
template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads);

/// [H x S x dh] -> [S x H*dh].
template <typename T>
Var<T> merge_heads(Var<T> x);

/// Stacks rank-2 tensors with equal column counts; zero-row parts are allowed.
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts);

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);

/// out[i, :] = table[ids[i], :].
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids);

/// out.flat[i] = x.flat[source[i]]; `source` must be a permutation-style map.
template <typename T>
Var<T> remap(Var<T> x, std::span<const std::uint32_t> source, Shape out_shape);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Scalar sum of all elements.
template <typename T>
Var<T> sum(Var<T> x);

/// Mean of (pred - target)^2 over all elements.
template <typename T>
Var<T> mse(Var<T> pred, Var<T> target);

/// Mean token cross-entropy over rows with target >= 0; rows with target < 0
/// are ignored.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

}  // namespace lddr
