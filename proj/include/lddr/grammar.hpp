// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lddr/scene.hpp"

namespace lddr {

using TokenIds = std::vector<std::int32_t>;

/// Raised for words outside the closed caption vocabulary; the message lists
/// the full vocabulary.
class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed word-level vocabulary of the caption and instruction grammar.
/// Ids 0..2 are <pad>, <bos>, <eos>.
class Vocabulary {
 public:
  static const Vocabulary& get();

  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;

  std::size_t size() const { return words_.size(); }
  std::int32_t id(std::string_view word) const;
  std::string_view word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }

  /// Whitespace-separated words to ids; throws VocabularyError on unknown words.
  TokenIds tokenize(std::string_view text) const;
  std::string detokenize(std::span<const std::int32_t> ids) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
};

/// Describes a scene with the closed grammar. Objects are named in cell
/// order; `grammar_seed` picks between synonymous forms ("above" vs "below",
/// "and" vs "left of" vs "right of"). Identical objects collapse to a count
/// phrase ("three red circles").
TokenIds caption(const SceneSpec& spec, std::uint64_t grammar_seed = 0);

/// Inverse of caption() for canonically laid-out scenes: list and count forms
/// fill cells in reading order, a vertical relation puts the upper object in
/// cell 0 and the lower one directly beneath it. Returns nullopt for token
/// sequences outside the grammar.
std::optional<SceneSpec> scene_from_caption(std::span<const std::int32_t> tokens, int grid,
                                            int img_side);

/// Draws a canonically laid-out scene (the layout scene_from_caption
/// reproduces) together with its caption.
struct CaptionedScene {
  SceneSpec spec;
  TokenIds tokens;
};
CaptionedScene sample_captioned_scene(Rng& rng, int grid, int img_side);

// ---- editing ---------------------------------------------------------------

enum class EditKind : std::uint8_t { kRecolor = 0, kAdd = 1, kRemove = 2 };

struct EditOp {
  EditKind kind = EditKind::kRecolor;
  int object_index = 0;       ///< recolor / remove
  Color new_color = Color::kRed;  ///< recolor
  SceneObject added;          ///< add (cell chosen by apply_edit)

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

struct EditSpec {
  SceneSpec source;
  EditOp op;
  SceneSpec target;
};

/// Applies an edit constructively. `add` places the object in the first
/// free cell. Throws std::invalid_argument when the op does not fit the scene.
SceneSpec apply_edit(const SceneSpec& source, const EditOp& op);

/// "make the red circle blue" / "add a red circle" / "remove the red circle".
/// The referenced object is the first one (in cell order) with that colour and
/// shape, so op.object_index must name such a first match.
TokenIds edit_instruction(const SceneSpec& source, const EditOp& op);

/// Resolves an instruction against a source scene.
std::optional<EditOp> parse_instruction(std::span<const std::int32_t> tokens,
                                        const SceneSpec& source);

/// Random edit of a canonically laid-out source scene. With recolor_only, the
/// op is always a recolor.
EditSpec sample_edit(Rng& rng, int grid, int img_side, bool recolor_only);

}  // namespace lddr
