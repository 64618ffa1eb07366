// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lddr/graph.hpp"
#include "lddr/ops.hpp"
#include "lddr/rng.hpp"

namespace lddr {

template <typename T>
BasicTensor<T> normal_tensor(Shape shape, Rng& rng, double stddev) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <typename T>
struct Linear {
  BasicParam<T> w;
  BasicParam<T> b;

  Linear() = default;
  /// W ~ N(0, (gain / sqrt(d_in))^2), b = 0. gain == 0 gives an all-zero layer.
  Linear(const std::string& name, std::size_t d_in, std::size_t d_out, Rng& rng, double gain = 1.0)
      : w(name + ".w", normal_tensor<T>({d_in, d_out}, rng, gain / std::sqrt(double(d_in)))),
        b(name + ".b", BasicTensor<T>(Shape{d_out})) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) { return linear(x, g.param(w), std::optional<Var<T>>(g.param(b))); }
  void collect(std::vector<BasicParam<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct LayerNorm {
  BasicParam<T> gain;
  BasicParam<T> bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t d)
      : gain(name + ".g", BasicTensor<T>::filled(Shape{d}, T{1})),
        bias(name + ".b", BasicTensor<T>(Shape{d})) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) { return layer_norm(x, g.param(gain), g.param(bias)); }
  void collect(std::vector<BasicParam<T>*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t d, std::size_t hidden, Rng& rng, double out_gain)
      : fc1(name + ".fc1", d, hidden, rng), fc2(name + ".fc2", hidden, d, rng, out_gain) {}

  Var<T> operator()(Graph<T>& g, Var<T> x) { return fc2(g, gelu(fc1(g, x))); }
  void collect(std::vector<BasicParam<T>*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

/// Multi-head attention projections; queries and keys/values may come from
/// different sequences (cross-attention).
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d, std::size_t kv_dim, std::size_t h,
                     Rng& rng, double out_gain)
      : wq(name + ".q", d, d, rng),
        wk(name + ".k", kv_dim, d, rng),
        wv(name + ".v", kv_dim, d, rng),
        wo(name + ".o", d, d, rng, out_gain),
        heads(h) {}

  Var<T> operator()(Graph<T>& g, Var<T> x, Var<T> context, const AttentionMask* mask = nullptr) {
    Var<T> q = split_heads(wq(g, x), heads);
    Var<T> k = split_heads(wk(g, context), heads);
    Var<T> v = split_heads(wv(g, context), heads);
    return wo(g, merge_heads(attention(q, k, v, mask)));
  }
  void collect(std::vector<BasicParam<T>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

/// Copies values between param lists of possibly different precision,
/// matching by position and checking names and shapes.
template <typename Dst, typename Src>
void copy_param_values(const std::vector<BasicParam<Dst>*>& dst,
                       const std::vector<BasicParam<Src>*>& src) {
  if (dst.size() != src.size()) throw DimensionError("copy_param_values: param count differs");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->value.shape() != src[i]->value.shape()) {
      throw DimensionError("copy_param_values: " + dst[i]->name + " vs " + src[i]->name);
    }
    dst[i]->value = BasicTensor<Dst>::cast_from(src[i]->value);
    dst[i]->trainable = src[i]->trainable;
    dst[i]->zero_grad();
  }
}

}  // namespace lddr
