// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lddr/grammar.hpp"
#include "lddr/scene.hpp"

namespace lddr {

enum class Category : std::uint8_t {
  kSingleObject = 0,
  kTwoObject,
  kCounting,
  kColors,
  kPosition,
  kAttributeBinding,
};

inline constexpr std::array<Category, 6> kCategories = {
    Category::kSingleObject, Category::kTwoObject, Category::kCounting,
    Category::kColors,       Category::kPosition,  Category::kAttributeBinding};

std::string_view category_name(Category c);

struct CategoryScores {
  std::array<double, 6> values{};  ///< indexed by Category
  double overall = 0;

  /// overall = unweighted mean of the six values.
  static CategoryScores from(const std::array<double, 6>& values);
  double operator[](Category c) const { return values[static_cast<std::size_t>(c)]; }
  nlohmann::json to_json() const;
};

struct BenchPrompt {
  Category category = Category::kSingleObject;
  SceneSpec spec;  ///< the scene the prompt describes
  TokenIds tokens;
  std::uint64_t index = 0;  ///< position in the suite
};

/// `per_category` prompts for each category, drawn from derived streams of
/// `seed`. Prompts are captions of canonically laid-out scenes.
std::vector<BenchPrompt> build_suite(std::uint64_t seed, int per_category, int grid, int img_side);

/// Category-specific success of a parsed image for a prompt. Failed parses
/// never succeed.
bool score_prompt(const BenchPrompt& prompt, const ParseResult& parsed);

struct PromptRecord {
  BenchPrompt prompt;
  ParseResult parsed;
  bool success = false;
};

struct EvalReport {
  CategoryScores scores;
  std::vector<PromptRecord> records;
  /// {scores, per_prompt: [{category, prompt, parsed, success}]}
  nlohmann::json to_json() const;
};

using ImageGenerator = std::function<Tensor(const BenchPrompt&)>;

/// Generates, parses and scores every prompt. Categories absent from the
/// suite score 0.
EvalReport evaluate(const ImageGenerator& generate, const std::vector<BenchPrompt>& suite,
                    const ParseOptions& parse_opts = {});

/// The closed-loop oracle: renders the scene its caption describes.
Tensor oracle_image(const BenchPrompt& prompt, int grid, int img_side);

// ---- datasets ----------------------------------------------------------------

enum class DatasetKind : std::uint8_t { kT2i, kEdit };

struct DatasetRow {
  DatasetKind kind = DatasetKind::kT2i;
  TokenIds tokens;  ///< caption (t2i) or instruction (edit)
  Tensor image;     ///< t2i image, or edit target
  Tensor source;    ///< edit source; empty for t2i
};

/// Writes `dir`/index.jsonl and `dir`/images/*.ppm. Row i depends only on
/// (seed, kind, i). I/O failures name the failing index.
void gen_dataset(const std::string& dir, int n, DatasetKind kind, std::uint64_t seed, int grid,
                 int img_side, bool recolor_only = false);

/// Loads an index written by gen_dataset; image paths are relative to it.
std::vector<DatasetRow> load_dataset(const std::string& index_path);

/// Re-derives an edit row's target from its source image and instruction.
bool verify_edit_row(const DatasetRow& row, int grid);

}  // namespace lddr
