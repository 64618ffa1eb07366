// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lddr/config.hpp"
#include "lddr/grammar.hpp"
#include "lddr/layers.hpp"

namespace lddr {

enum class TokenTag : std::uint8_t { kText, kImagePatch, kQuery };

/// Prompt for the multimodal tower: text tokens, an optional image in [0, 1],
/// and (implicitly) the learnable queries appended last.
struct PromptSequence {
  TokenIds text;
  std::optional<Tensor> image;  ///< [img_side x img_side x 3], values in [0, 1]

  /// Builds a prompt from a generator-space image in [-1, 1].
  static PromptSequence with_signed_image(TokenIds text, const Tensor& signed_image);

  /// Per-position tags: text, then image patches, then `queries` query slots.
  std::vector<TokenTag> layout(int patches, int queries) const;
  /// Stable digest of the tokens and image bytes.
  std::uint64_t digest() const;
};

/// Query-position hidden states keyed by 1-based layer index.
template <typename T>
using LayerStates = std::map<int, Var<T>>;

template <typename T>
struct MllmBlock {
  LayerNorm<T> ln1;
  Linear<T> wq, wk, wv, wo;
  LayerNorm<T> ln2;
  Mlp<T> mlp;
};

/// Decoder-only stand-in for the multimodal LLM: token and linear patch
/// embeddings, learned positions, pre-norm causal blocks and an LM head used
/// only for toy pretraining.
///
/// The sequence is processed as a prompt prefix plus the trailing query rows.
/// Because the mask is causal and queries come last, prefix rows never depend
/// on the queries; they are computed once and only the query rows carry
/// gradient back to the query parameters.
template <typename T>
class ToyMllm {
 public:
  ToyMllm(const MllmConfig& cfg, Rng& rng);

  const MllmConfig& config() const { return cfg_; }
  std::vector<BasicParam<T>*> params();

  void freeze();
  bool frozen() const;

  struct Embedded {
    Var<T> prefix;   ///< [P x d], text rows then image-patch rows
    Var<T> queries;  ///< [N x d]
    std::size_t text_rows = 0;
    std::size_t image_rows = 0;
    /// Whole [S x d] sequence.
    Var<T> full() const;
  };

  /// Throws VocabularyError/DimensionError on out-of-vocabulary ids,
  /// mismatched image geometry or overflow of max_seq.
  Embedded embed_prompt(Graph<T>& g, const PromptSequence& seq, Var<T> queries);

  /// Runs every block and records query rows after each tapped block.
  /// `taps` must be strictly increasing and within 1..m.
  LayerStates<T> forward_collect(const Embedded& emb, std::span<const int> taps);

  /// Next-token loss on [image patches ++ <bos> caption <eos>] (image optional).
  Var<T> lm_loss(Graph<T>& g, const TokenIds& caption, const std::optional<Tensor>& signed_image);
  /// Next-token loss on `target <eos>` after a prompt laid out as in
  /// embed_prompt; prompt rows carry no loss.
  Var<T> prompt_lm_loss(Graph<T>& g, const PromptSequence& prompt, const TokenIds& target);

 private:
  std::pair<Var<T>, Var<T>> block(Graph<T>& g, MllmBlock<T>& b, Var<T> prefix, Var<T> queries);
  Var<T> image_rows(Graph<T>& g, const Tensor& unit_image);

  MllmConfig cfg_;
  BasicParam<T> tok_emb_;
  BasicParam<T> pos_emb_;
  Linear<T> patch_embed_;
  std::vector<MllmBlock<T>> blocks_;
  LayerNorm<T> ln_f_;
  Linear<T> lm_head_;
};

struct PretrainReport {
  int steps = 0;
  double initial_heldout_loss = 0;
  double final_heldout_loss = 0;
};

/// Toy next-token pretraining over the caption grammar, then freezes every
/// weight. Samples are plain captions, image-conditioned captions, and edit
/// prompts followed by the caption of the edited scene. steps == 0 just
/// freezes the random initialization. Throws NonFiniteError on divergence.
PretrainReport toy_pretrain(ToyMllm<float>& mllm, int steps, int batch, double lr,
                            std::uint64_t seed, int grid);

/// Held-out next-token loss on a fixed caption sample.
double heldout_lm_loss(ToyMllm<float>& mllm, std::uint64_t seed, int grid, int samples = 64);

}  // namespace lddr
