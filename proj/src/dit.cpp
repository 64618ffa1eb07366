// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/dit.hpp"

#include <cmath>
#include <stdexcept>

#include "lddr/image.hpp"

namespace lddr {

template <typename T>
BasicTensor<T> sinusoidal_embedding(double t, int dim) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("timestep " + std::to_string(t) + " outside [0, 1]");
  }
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep embedding dim must be even");
  const int half = dim / 2;
  BasicTensor<T> e(Shape{static_cast<std::size_t>(dim)});
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    const double arg = 1000.0 * t * freq;
    e[static_cast<std::size_t>(k)] = static_cast<T>(std::sin(arg));
    e[static_cast<std::size_t>(half + k)] = static_cast<T>(std::cos(arg));
  }
  return e;
}

template <typename T>
DitGenerator<T>::DitGenerator(const DitConfig& cfg, Rng& rng)
    : cfg_(cfg),
      to_patches_(patchify_map(cfg.img_side, cfg.patch)),
      from_patches_(unpatchify_map(cfg.img_side, cfg.patch)) {
  if (cfg.layers < 1 || cfg.heads < 1 || cfg.width % cfg.heads != 0) {
    throw ConfigError({"invalid DiT configuration"});
  }
  const auto d = static_cast<std::size_t>(cfg.width);
  const auto pd = static_cast<std::size_t>(cfg.patch_dim());
  const auto h = static_cast<std::size_t>(cfg.heads);
  const double out_gain = 1.0 / std::sqrt(2.0 * cfg.layers);
  patch_in_ = Linear<T>("dit.patch_in", pd, d, rng);
  pos_emb_ = BasicParam<T>("dit.pos_emb",
                           normal_tensor<T>({static_cast<std::size_t>(cfg.patches()), d}, rng, 0.5));
  t_fc1_ = Linear<T>("dit.t_embed.fc1", static_cast<std::size_t>(cfg.t_embed_dim), d, rng);
  t_fc2_ = Linear<T>("dit.t_embed.fc2", d, d, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string n = "dit.block" + std::to_string(l + 1);
    DitBlock<T> b;
    b.ln1 = LayerNorm<T>(n + ".ln1", d);
    b.self_attn = MultiHeadAttention<T>(n + ".self", d, d, h, rng, out_gain);
    b.ln2 = LayerNorm<T>(n + ".ln2", d);
    b.cross_attn = MultiHeadAttention<T>(n + ".cross", d, d, h, rng, out_gain);
    b.ln3 = LayerNorm<T>(n + ".ln3", d);
    b.mlp = Mlp<T>(n + ".mlp", d, static_cast<std::size_t>(cfg.mlp_hidden), rng, out_gain);
    blocks_.push_back(std::move(b));
  }
  ln_f_ = LayerNorm<T>("dit.ln_f", d);
  patch_out_ = Linear<T>("dit.patch_out", d, pd, rng, 0.0);
}

template <typename T>
std::vector<BasicParam<T>*> DitGenerator<T>::params() {
  std::vector<BasicParam<T>*> out;
  patch_in_.collect(out);
  out.push_back(&pos_emb_);
  t_fc1_.collect(out);
  t_fc2_.collect(out);
  for (auto& b : blocks_) {
    b.ln1.collect(out);
    b.self_attn.collect(out);
    b.ln2.collect(out);
    b.cross_attn.collect(out);
    b.ln3.collect(out);
    b.mlp.collect(out);
  }
  ln_f_.collect(out);
  patch_out_.collect(out);
  return out;
}

template <typename T>
Var<T> DitGenerator<T>::timestep_embed(Graph<T>& g, double t) {
  const auto d = static_cast<std::size_t>(cfg_.t_embed_dim);
  Var<T> s = g.constant(sinusoidal_embedding<T>(t, cfg_.t_embed_dim).reshaped(Shape{1, d}));
  Var<T> e = t_fc2_(g, gelu(t_fc1_(g, s)));
  return reshape(e, Shape{static_cast<std::size_t>(cfg_.width)});
}

template <typename T>
Var<T> DitGenerator<T>::cross_attention(Graph<T>& g, int layer, Var<T> tokens,
                                        const ConditionStack<T>& stack) {
  if (stack.entries.size() != blocks_.size()) {
    throw ConfigError({"condition stack has " + std::to_string(stack.entries.size()) +
                       " entries but the DiT has " + std::to_string(blocks_.size()) + " layers"});
  }
  auto& b = blocks_.at(static_cast<std::size_t>(layer - 1));
  return b.cross_attn(g, b.ln2(g, tokens), stack.entries[static_cast<std::size_t>(layer - 1)]);
}

template <typename T>
Var<T> DitGenerator<T>::forward(Graph<T>& g, Var<T> x_t, double t, const ConditionStack<T>& stack,
                                DitProbe<T>* probe) {
  const auto side = static_cast<std::size_t>(cfg_.img_side);
  if (x_t.value().shape() != Shape{side, side, 3}) {
    throw DimensionError("DiT input " + shape_str(x_t.value().shape()) + " does not match [" +
                         std::to_string(side) + "x" + std::to_string(side) + "x3]");
  }
  if (stack.entries.size() != blocks_.size()) {
    throw ConfigError({"condition stack has " + std::to_string(stack.entries.size()) +
                       " entries but the DiT has " + std::to_string(blocks_.size()) + " layers"});
  }
  const auto patches = static_cast<std::size_t>(cfg_.patches());
  const auto pd = static_cast<std::size_t>(cfg_.patch_dim());
  Var<T> tokens = patch_in_(g, remap(x_t, std::span<const std::uint32_t>(to_patches_), Shape{patches, pd}));
  tokens = add(tokens, g.param(pos_emb_));
  tokens = add_row_vector(tokens, timestep_embed(g, t));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    Var<T> x1 = b.ln1(g, tokens);
    tokens = add(tokens, b.self_attn(g, x1, x1));
    Var<T> cross = b.cross_attn(g, b.ln2(g, tokens), stack.entries[i]);
    tokens = add(tokens, cross);
    tokens = add(tokens, b.mlp(g, b.ln3(g, tokens)));
    if (probe) {
      probe->cross_out.push_back(cross.value());
      probe->block_out.push_back(tokens.value());
    }
  }
  Var<T> out = patch_out_(g, ln_f_(g, tokens));
  return remap(out, std::span<const std::uint32_t>(from_patches_), Shape{side, side, 3});
}

template BasicTensor<float> sinusoidal_embedding<float>(double, int);
template BasicTensor<double> sinusoidal_embedding<double>(double, int);
template class DitGenerator<float>;
template class DitGenerator<double>;

}  // namespace lddr
