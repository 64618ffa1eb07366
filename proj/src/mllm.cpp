// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/mllm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <tuple>

#include "lddr/image.hpp"
#include "lddr/optim.hpp"

namespace lddr {

PromptSequence PromptSequence::with_signed_image(TokenIds text, const Tensor& signed_image) {
  PromptSequence p;
  p.text = std::move(text);
  Tensor unit = signed_image;
  for (auto& v : unit.vec()) v = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  p.image = std::move(unit);
  return p;
}

std::vector<TokenTag> PromptSequence::layout(int patches, int queries) const {
  std::vector<TokenTag> tags(text.size(), TokenTag::kText);
  if (image) tags.insert(tags.end(), static_cast<std::size_t>(patches), TokenTag::kImagePatch);
  tags.insert(tags.end(), static_cast<std::size_t>(queries), TokenTag::kQuery);
  return tags;
}

std::uint64_t PromptSequence::digest() const {
  std::uint64_t h = fnv1a64("prompt");
  for (std::int32_t id : text) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&id), sizeof(id)), h);
  }
  h = fnv1a64(image ? "img" : "noimg", h);
  if (image) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(image->data()),
                                 image->size() * sizeof(float)),
                h);
  }
  return h;
}

template <typename T>
ToyMllm<T>::ToyMllm(const MllmConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.heads < 1 || cfg.width % cfg.heads != 0 || cfg.patch < 1 ||
      cfg.img_side % cfg.patch != 0) {
    throw std::invalid_argument("invalid MLLM configuration");
  }
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  const double out_gain = 1.0 / std::sqrt(2.0 * cfg.layers);
  tok_emb_ = BasicParam<T>("mllm.tok_emb",
                           normal_tensor<T>({static_cast<std::size_t>(cfg.vocab), d}, rng, 0.5));
  pos_emb_ = BasicParam<T>("mllm.pos_emb",
                           normal_tensor<T>({static_cast<std::size_t>(cfg.max_seq), d}, rng, 0.1));
  patch_embed_ = Linear<T>("mllm.patch_embed", static_cast<std::size_t>(cfg.patch_dim()), d, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string n = "mllm.block" + std::to_string(l + 1);
    MllmBlock<T> b;
    b.ln1 = LayerNorm<T>(n + ".ln1", d);
    b.wq = Linear<T>(n + ".attn.q", d, d, rng);
    b.wk = Linear<T>(n + ".attn.k", d, d, rng);
    b.wv = Linear<T>(n + ".attn.v", d, d, rng);
    b.wo = Linear<T>(n + ".attn.o", d, d, rng, out_gain);
    b.ln2 = LayerNorm<T>(n + ".ln2", d);
    b.mlp = Mlp<T>(n + ".mlp", d, static_cast<std::size_t>(cfg.mlp_hidden), rng, out_gain);
    blocks_.push_back(std::move(b));
  }
  ln_f_ = LayerNorm<T>("mllm.ln_f", d);
  lm_head_ = Linear<T>("mllm.lm_head", d, static_cast<std::size_t>(cfg.vocab), rng);
}

template <typename T>
std::vector<BasicParam<T>*> ToyMllm<T>::params() {
  std::vector<BasicParam<T>*> out{&tok_emb_, &pos_emb_};
  patch_embed_.collect(out);
  for (auto& b : blocks_) {
    b.ln1.collect(out);
    b.wq.collect(out);
    b.wk.collect(out);
    b.wv.collect(out);
    b.wo.collect(out);
    b.ln2.collect(out);
    b.mlp.collect(out);
  }
  ln_f_.collect(out);
  lm_head_.collect(out);
  return out;
}

template <typename T>
void ToyMllm<T>::freeze() {
  for (auto* p : params()) {
    p->trainable = false;
    p->zero_grad();
  }
}

template <typename T>
bool ToyMllm<T>::frozen() const {
  auto& self = const_cast<ToyMllm<T>&>(*this);
  for (auto* p : self.params()) {
    if (p->trainable) return false;
  }
  return true;
}

template <typename T>
Var<T> ToyMllm<T>::Embedded::full() const {
  const std::vector<Var<T>> parts{prefix, queries};
  return concat_rows(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> ToyMllm<T>::image_rows(Graph<T>& g, const Tensor& unit_image) {
  const std::size_t side = static_cast<std::size_t>(cfg_.img_side);
  if (unit_image.shape() != Shape{side, side, 3}) {
    throw DimensionError("prompt image " + shape_str(unit_image.shape()) + " does not match [" +
                         std::to_string(side) + "x" + std::to_string(side) + "x3]");
  }
  BasicTensor<T> centered = BasicTensor<T>::cast_from(unit_image);
  for (auto& v : centered.vec()) v = v * T(2) - T(1);
  return patch_embed_(g, g.constant(patchify(centered, cfg_.patch)));
}

template <typename T>
typename ToyMllm<T>::Embedded ToyMllm<T>::embed_prompt(Graph<T>& g, const PromptSequence& seq,
                                                       Var<T> queries) {
  const std::size_t d = static_cast<std::size_t>(cfg_.width);
  const BasicTensor<T>& qv = queries.value();
  if (qv.rank() != 2 || qv.dim(1) != d) {
    throw DimensionError("query set " + shape_str(qv.shape()) + " does not have width " +
                         std::to_string(d));
  }
  for (std::int32_t id : seq.text) {
    if (id < 0 || id >= cfg_.vocab) {
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(cfg_.vocab));
    }
  }
  const std::size_t text = seq.text.size();
  const std::size_t img = seq.image ? static_cast<std::size_t>(cfg_.patches()) : 0;
  const std::size_t total = text + img + qv.dim(0);
  if (total > static_cast<std::size_t>(cfg_.max_seq)) {
    throw DimensionError("prompt of " + std::to_string(total) + " positions exceeds max_seq " +
                         std::to_string(cfg_.max_seq));
  }
  auto positions = [](std::size_t from, std::size_t count) {
    std::vector<std::int32_t> ids(count);
    for (std::size_t i = 0; i < count; ++i) ids[i] = static_cast<std::int32_t>(from + i);
    return ids;
  };
  Var<T> pos_table = g.param(pos_emb_);
  std::vector<Var<T>> prefix_parts;
  if (text) {
    Var<T> tok = gather_rows(g.param(tok_emb_), std::span<const std::int32_t>(seq.text));
    const auto pos = positions(0, text);
    prefix_parts.push_back(add(tok, gather_rows(pos_table, std::span<const std::int32_t>(pos))));
  }
  if (img) {
    const auto pos = positions(text, img);
    prefix_parts.push_back(
        add(image_rows(g, *seq.image), gather_rows(pos_table, std::span<const std::int32_t>(pos))));
  }
  Embedded e;
  e.text_rows = text;
  e.image_rows = img;
  if (prefix_parts.empty()) {
    e.prefix = g.constant(BasicTensor<T>(Shape{0, d}));
  } else if (prefix_parts.size() == 1) {
    e.prefix = prefix_parts[0];
  } else {
    e.prefix = concat_rows(std::span<const Var<T>>(prefix_parts));
  }
  const auto qpos = positions(text + img, qv.dim(0));
  e.queries = add(queries, gather_rows(pos_table, std::span<const std::int32_t>(qpos)));
  return e;
}

template <typename T>
std::pair<Var<T>, Var<T>> ToyMllm<T>::block(Graph<T>& g, MllmBlock<T>& b, Var<T> prefix,
                                            Var<T> queries) {
  const std::size_t p_rows = prefix.value().dim(0);
  const std::size_t q_rows = queries.value().dim(0);
  const std::size_t heads = static_cast<std::size_t>(cfg_.heads);
  Var<T> pk{}, pv{};
  if (p_rows) {
    Var<T> x = b.ln1(g, prefix);
    Var<T> q = b.wq(g, x);
    pk = b.wk(g, x);
    pv = b.wv(g, x);
    const AttentionMask mask = AttentionMask::causal(p_rows, p_rows);
    Var<T> a = attention(split_heads(q, heads), split_heads(pk, heads), split_heads(pv, heads), &mask);
    prefix = add(prefix, b.wo(g, merge_heads(a)));
    prefix = add(prefix, b.mlp(g, b.ln2(g, prefix)));
  }
  if (q_rows) {
    Var<T> x = b.ln1(g, queries);
    Var<T> q = b.wq(g, x);
    Var<T> k = b.wk(g, x);
    Var<T> v = b.wv(g, x);
    if (p_rows) {
      const std::vector<Var<T>> ks{pk, k}, vs{pv, v};
      k = concat_rows(std::span<const Var<T>>(ks));
      v = concat_rows(std::span<const Var<T>>(vs));
    }
    const AttentionMask mask = AttentionMask::causal(q_rows, p_rows + q_rows, p_rows);
    Var<T> a = attention(split_heads(q, heads), split_heads(k, heads), split_heads(v, heads), &mask);
    queries = add(queries, b.wo(g, merge_heads(a)));
    queries = add(queries, b.mlp(g, b.ln2(g, queries)));
  }
  return {prefix, queries};
}

template <typename T>
LayerStates<T> ToyMllm<T>::forward_collect(const Embedded& emb, std::span<const int> taps) {
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 1 || taps[i] > cfg_.layers) {
      throw std::out_of_range("tap layer " + std::to_string(taps[i]) + " outside 1.." +
                              std::to_string(cfg_.layers));
    }
    if (i && taps[i] <= taps[i - 1]) throw std::invalid_argument("taps must be strictly increasing");
  }
  Graph<T>& g = *emb.prefix.graph;
  LayerStates<T> states;
  Var<T> prefix = emb.prefix, queries = emb.queries;
  std::size_t next_tap = 0;
  for (int l = 1; l <= cfg_.layers && next_tap < taps.size(); ++l) {
    std::tie(prefix, queries) = block(g, blocks_[static_cast<std::size_t>(l - 1)], prefix, queries);
    if (taps[next_tap] == l) {
      states.emplace(l, queries);
      ++next_tap;
    }
  }
  return states;
}

template <typename T>
Var<T> ToyMllm<T>::lm_loss(Graph<T>& g, const TokenIds& caption_ids,
                           const std::optional<Tensor>& signed_image) {
  const std::size_t d = static_cast<std::size_t>(cfg_.width);
  std::vector<std::int32_t> input{Vocabulary::kBos};
  input.insert(input.end(), caption_ids.begin(), caption_ids.end());
  std::vector<std::int32_t> targets;
  std::vector<Var<T>> parts;
  std::size_t at = 0;
  if (signed_image) {
    Tensor unit = *signed_image;
    for (auto& v : unit.vec()) v = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
    Var<T> rows = image_rows(g, unit);
    const std::size_t n = rows.value().dim(0);
    std::vector<std::int32_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<std::int32_t>(i);
    parts.push_back(add(rows, gather_rows(g.param(pos_emb_), std::span<const std::int32_t>(pos))));
    targets.assign(n, -1);
    at = n;
  }
  if (at + input.size() > static_cast<std::size_t>(cfg_.max_seq)) {
    throw DimensionError("pretraining sequence exceeds max_seq");
  }
  std::vector<std::int32_t> pos(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) pos[i] = static_cast<std::int32_t>(at + i);
  parts.push_back(add(gather_rows(g.param(tok_emb_), std::span<const std::int32_t>(input)),
                      gather_rows(g.param(pos_emb_), std::span<const std::int32_t>(pos))));
  for (std::size_t i = 0; i < input.size(); ++i) {
    targets.push_back(i + 1 < input.size() ? input[i + 1] : Vocabulary::kEos);
  }
  Var<T> h = parts.size() == 1 ? parts[0] : concat_rows(std::span<const Var<T>>(parts));
  Var<T> none = g.constant(BasicTensor<T>(Shape{0, d}));
  for (auto& b : blocks_) h = block(g, b, h, none).first;
  Var<T> logits = lm_head_(g, ln_f_(g, h));
  return cross_entropy(logits, std::span<const std::int32_t>(targets));
}

template <typename T>
Var<T> ToyMllm<T>::prompt_lm_loss(Graph<T>& g, const PromptSequence& prompt, const TokenIds& target) {
  const std::size_t d = static_cast<std::size_t>(cfg_.width);
  Embedded e = embed_prompt(g, prompt, g.constant(BasicTensor<T>(Shape{0, d})));
  const std::size_t at = e.text_rows + e.image_rows;
  if (at == 0) throw DimensionError("prompt loss needs a non-empty prompt");
  if (at + target.size() > static_cast<std::size_t>(cfg_.max_seq)) {
    throw DimensionError("pretraining sequence exceeds max_seq");
  }
  std::vector<std::int32_t> pos(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) pos[i] = static_cast<std::int32_t>(at + i);
  std::vector<std::int32_t> targets(at - 1, -1);
  targets.insert(targets.end(), target.begin(), target.end());
  targets.push_back(Vocabulary::kEos);
  Var<T> h = e.prefix;
  if (!target.empty()) {
    const std::vector<Var<T>> parts{
        h, add(gather_rows(g.param(tok_emb_), std::span<const std::int32_t>(target)),
               gather_rows(g.param(pos_emb_), std::span<const std::int32_t>(pos)))};
    h = concat_rows(std::span<const Var<T>>(parts));
  }
  Var<T> none = g.constant(BasicTensor<T>(Shape{0, d}));
  for (auto& b : blocks_) h = block(g, b, h, none).first;
  Var<T> logits = lm_head_(g, ln_f_(g, h));
  return cross_entropy(logits, std::span<const std::int32_t>(targets));
}

template class ToyMllm<float>;
template class ToyMllm<double>;

namespace {

struct PretrainSample {
  TokenIds caption;
  std::optional<Tensor> image;
  std::optional<PromptSequence> prompt;
};

// A third each: plain captions, image-then-caption, and edit prompts
// [<bos> instruction, source image] followed by the caption of the target.
PretrainSample pretrain_sample(const Rng& base, std::uint64_t index, int grid, int img_side) {
  Rng r = base.stream("pretrain.sample", index);
  PretrainSample s;
  const double kind = r.uniform();
  if (kind < 2.0 / 3.0) {
    CaptionedScene cs = sample_captioned_scene(r, grid, img_side);
    s.caption = cs.tokens;
    if (kind < 1.0 / 3.0) s.image = render(cs.spec);
    return s;
  }
  const EditSpec e = sample_edit(r, grid, img_side, false);
  TokenIds text{Vocabulary::kBos};
  const TokenIds instruction = edit_instruction(e.source, e.op);
  text.insert(text.end(), instruction.begin(), instruction.end());
  s.prompt = PromptSequence::with_signed_image(std::move(text), render(e.source));
  s.caption = caption(e.target);
  return s;
}

template <typename T>
Var<T> sample_loss(ToyMllm<T>& mllm, Graph<T>& g, const PretrainSample& s) {
  return s.prompt ? mllm.prompt_lm_loss(g, *s.prompt, s.caption) : mllm.lm_loss(g, s.caption, s.image);
}

}  // namespace

double heldout_lm_loss(ToyMllm<float>& mllm, std::uint64_t seed, int grid, int samples) {
  const Rng base = Rng(seed).stream("pretrain.heldout");
  double total = 0;
  for (int i = 0; i < samples; ++i) {
    const PretrainSample s = pretrain_sample(base, static_cast<std::uint64_t>(i), grid,
                                             mllm.config().img_side);
    Graph<float> g(false);
    total += sample_loss(mllm, g, s).value()[0];
  }
  return total / samples;
}

PretrainReport toy_pretrain(ToyMllm<float>& mllm, int steps, int batch, double lr,
                            std::uint64_t seed, int grid) {
  PretrainReport report;
  report.steps = steps;
  auto params = mllm.params();
  for (auto* p : params) p->trainable = true;
  report.initial_heldout_loss = heldout_lm_loss(mllm, seed, grid);
  AdamW opt(OptimizerConfig{0.9, 0.999, 1e-8, 0.0});
  const Rng base = Rng(seed).stream("pretrain.train");
  for (int step = 0; step < steps; ++step) {
    for (auto* p : params) p->zero_grad();
    double loss = 0;
    for (int b = 0; b < batch; ++b) {
      const auto idx = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch) +
                       static_cast<std::uint64_t>(b);
      const PretrainSample s = pretrain_sample(base, idx, grid, mllm.config().img_side);
      Graph<float> g(true);
      Var<float> l = sample_loss(mllm, g, s);
      g.backward(l, 1.0f / static_cast<float>(batch));
      g.accumulate_param_grads();
      loss += l.value()[0] / batch;
    }
    if (!std::isfinite(loss)) {
      throw NonFiniteError("toy MLLM pretraining diverged at step " + std::to_string(step));
    }
    // Short linear warmup then cosine decay to 10% of the peak rate.
    const double warm = std::min(1.0, (step + 1) / std::max(1.0, steps * 0.05));
    const double cos_part = 0.5 * (1 + std::cos(M_PI * step / std::max(1, steps)));
    opt.step(params, lr * warm * (0.1 + 0.9 * cos_part));
  }
  report.final_heldout_loss = heldout_lm_loss(mllm, seed, grid);
  mllm.freeze();
  return report;
}

}  // namespace lddr
