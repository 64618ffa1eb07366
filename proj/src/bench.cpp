// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "lddr/image.hpp"

namespace lddr {

namespace fs = std::filesystem;

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kSingleObject: return "single_object";
    case Category::kTwoObject: return "two_object";
    case Category::kCounting: return "counting";
    case Category::kColors: return "colors";
    case Category::kPosition: return "position";
    case Category::kAttributeBinding: return "attribute_binding";
  }
  throw std::invalid_argument("unknown category");
}

CategoryScores CategoryScores::from(const std::array<double, 6>& values) {
  CategoryScores s;
  s.values = values;
  double total = 0;
  for (double v : values) total += v;
  s.overall = total / 6.0;
  return s;
}

nlohmann::json CategoryScores::to_json() const {
  nlohmann::json j;
  for (Category c : kCategories) j[std::string(category_name(c))] = (*this)[c];
  j["overall"] = overall;
  return j;
}

namespace {

ShapeKind random_shape(Rng& r) { return static_cast<ShapeKind>(r.uniform_int(kNumShapes)); }
Color random_color(Rng& r) { return static_cast<Color>(r.uniform_int(kNumColors)); }

/// Two distinct shapes.
std::pair<ShapeKind, ShapeKind> two_shapes(Rng& r) {
  const auto a = r.uniform_int(kNumShapes);
  const auto b = (a + 1 + r.uniform_int(kNumShapes - 1)) % kNumShapes;
  return {static_cast<ShapeKind>(a), static_cast<ShapeKind>(b)};
}

SceneSpec prompt_scene(Category c, Rng& r, int grid, int side) {
  SceneSpec s;
  s.grid = grid;
  s.img_side = side;
  switch (c) {
    case Category::kSingleObject:
    case Category::kColors:
      s.objects.push_back({random_shape(r), random_color(r), 0});
      break;
    case Category::kTwoObject: {
      const auto [a, b] = two_shapes(r);
      s.objects.push_back({a, random_color(r), 0});
      s.objects.push_back({b, random_color(r), 1});
      break;
    }
    case Category::kCounting: {
      const int n = 2 + static_cast<int>(r.uniform_int(std::min(3, grid * grid - 1)));
      const SceneObject o{random_shape(r), random_color(r), 0};
      for (int i = 0; i < n; ++i) s.objects.push_back({o.shape, o.color, i});
      break;
    }
    case Category::kPosition: {
      const auto [a, b] = two_shapes(r);
      const bool vertical = r.bernoulli(0.5);
      s.objects.push_back({a, random_color(r), 0});
      s.objects.push_back({b, random_color(r), vertical ? grid : 1});
      break;
    }
    case Category::kAttributeBinding: {
      const auto [a, b] = two_shapes(r);
      const auto ca = r.uniform_int(kNumColors);
      const auto cb = (ca + 1 + r.uniform_int(kNumColors - 1)) % kNumColors;
      s.objects.push_back({a, static_cast<Color>(ca), 0});
      s.objects.push_back({b, static_cast<Color>(cb), 1});
      break;
    }
  }
  s.normalize();
  return s;
}

const SceneObject* find_shape(const SceneSpec& s, ShapeKind shape) {
  for (const auto& o : s.objects) {
    if (o.shape == shape) return &o;
  }
  return nullptr;
}

bool has_object(const SceneSpec& s, ShapeKind shape, Color color) {
  return std::any_of(s.objects.begin(), s.objects.end(),
                     [&](const SceneObject& o) { return o.shape == shape && o.color == color; });
}

}  // namespace

std::vector<BenchPrompt> build_suite(std::uint64_t seed, int per_category, int grid, int img_side) {
  std::vector<BenchPrompt> suite;
  const Rng base = Rng(seed).stream("bench.suite");
  for (Category c : kCategories) {
    for (int i = 0; i < per_category; ++i) {
      Rng r = base.stream(category_name(c), static_cast<std::uint64_t>(i));
      BenchPrompt p;
      p.category = c;
      p.spec = prompt_scene(c, r, grid, img_side);
      p.tokens = caption(p.spec, r.next_u64());
      p.index = suite.size();
      suite.push_back(std::move(p));
    }
  }
  return suite;
}

bool score_prompt(const BenchPrompt& prompt, const ParseResult& parsed) {
  if (!parsed.ok) return false;
  const auto& want = prompt.spec.objects;
  const auto& got = parsed.spec.objects;
  switch (prompt.category) {
    case Category::kSingleObject:
      return got.size() == 1 && got[0].shape == want[0].shape;
    case Category::kColors:
      return got.size() == 1 && got[0].shape == want[0].shape && got[0].color == want[0].color;
    case Category::kTwoObject: {
      if (got.size() != 2) return false;
      return (got[0].shape == want[0].shape && got[1].shape == want[1].shape) ||
             (got[0].shape == want[1].shape && got[1].shape == want[0].shape);
    }
    case Category::kCounting:
      return got.size() == want.size() &&
             std::all_of(got.begin(), got.end(),
                         [&](const SceneObject& o) { return o.shape == want[0].shape; });
    case Category::kPosition: {
      if (got.size() != 2) return false;
      const SceneObject* a = find_shape(parsed.spec, want[0].shape);
      const SceneObject* b = find_shape(parsed.spec, want[1].shape);
      if (!a || !b) return false;
      const SceneSpec& s = prompt.spec;
      if (s.row_of(want[0].cell) != s.row_of(want[1].cell)) {
        return parsed.spec.row_of(a->cell) < parsed.spec.row_of(b->cell);
      }
      return parsed.spec.col_of(a->cell) < parsed.spec.col_of(b->cell);
    }
    case Category::kAttributeBinding:
      return got.size() == 2 && has_object(parsed.spec, want[0].shape, want[0].color) &&
             has_object(parsed.spec, want[1].shape, want[1].color);
  }
  return false;
}

EvalReport evaluate(const ImageGenerator& generate, const std::vector<BenchPrompt>& suite,
                    const ParseOptions& parse_opts) {
  EvalReport report;
  std::array<double, 6> hits{}, counts{};
  for (const auto& p : suite) {
    PromptRecord rec;
    rec.prompt = p;
    try {
      rec.parsed = parse_image(generate(p), parse_opts);
    } catch (const std::exception& e) {
      rec.parsed = ParseResult{false, {}, std::string("generation failed: ") + e.what()};
    }
    rec.success = score_prompt(p, rec.parsed);
    const auto c = static_cast<std::size_t>(p.category);
    counts[c] += 1;
    hits[c] += rec.success ? 1 : 0;
    report.records.push_back(std::move(rec));
  }
  std::array<double, 6> values{};
  for (std::size_t c = 0; c < 6; ++c) values[c] = counts[c] > 0 ? hits[c] / counts[c] : 0.0;
  report.scores = CategoryScores::from(values);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  const auto& vocab = Vocabulary::get();
  for (const auto& r : records) {
    per.push_back({{"category", std::string(category_name(r.prompt.category))},
                   {"prompt", vocab.detokenize(r.prompt.tokens)},
                   {"parsed", r.parsed.ok ? nlohmann::json(r.parsed.spec.to_string())
                                          : nlohmann::json(nullptr)},
                   {"reason", r.parsed.reason},
                   {"success", r.success}});
  }
  return {{"scores", scores.to_json()}, {"per_prompt", per}};
}

Tensor oracle_image(const BenchPrompt& prompt, int grid, int img_side) {
  const auto spec = scene_from_caption(prompt.tokens, grid, img_side);
  if (!spec) throw std::invalid_argument("caption outside the grammar");
  return render(*spec);
}

// ---- datasets ----------------------------------------------------------------

namespace {

nlohmann::json token_json(const TokenIds& ids) {
  return {{"ids", ids}, {"text", Vocabulary::get().detokenize(ids)}};
}

std::string row_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", i);
  return buf;
}

}  // namespace

void gen_dataset(const std::string& dir, int n, DatasetKind kind, std::uint64_t seed, int grid,
                 int img_side, bool recolor_only) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream index(fs::path(dir) / "index.jsonl", std::ios::binary);
  if (!index) throw std::runtime_error("cannot write " + (fs::path(dir) / "index.jsonl").string());
  const Rng base = Rng(seed).stream(kind == DatasetKind::kT2i ? "dataset.t2i" : "dataset.edit");
  for (int i = 0; i < n; ++i) {
    Rng r = base.stream("row", static_cast<std::uint64_t>(i));
    nlohmann::json row;
    row["id"] = i;
    try {
      if (kind == DatasetKind::kT2i) {
        const CaptionedScene cs = sample_captioned_scene(r, grid, img_side);
        const std::string img = "images/" + row_name(i) + ".ppm";
        write_ppm((fs::path(dir) / img).string(), render(cs.spec));
        row["kind"] = "t2i";
        row["caption"] = token_json(cs.tokens);
        row["image"] = img;
      } else {
        const EditSpec e = sample_edit(r, grid, img_side, recolor_only);
        const std::string src = "images/" + row_name(i) + "_src.ppm";
        const std::string tgt = "images/" + row_name(i) + "_tgt.ppm";
        write_ppm((fs::path(dir) / src).string(), render(e.source));
        write_ppm((fs::path(dir) / tgt).string(), render(e.target));
        row["kind"] = "edit";
        row["instruction"] = token_json(edit_instruction(e.source, e.op));
        row["source"] = src;
        row["target"] = tgt;
      }
    } catch (const std::exception& ex) {
      throw std::runtime_error("dataset row " + std::to_string(i) + ": " + ex.what());
    }
    index << row.dump() << '\n';
    if (!index) throw std::runtime_error("dataset row " + std::to_string(i) + ": index write failed");
  }
}

std::vector<DatasetRow> load_dataset(const std::string& index_path) {
  std::ifstream in(index_path);
  if (!in) throw std::runtime_error("dataset index not found: " + index_path);
  const fs::path root = fs::path(index_path).parent_path();
  std::vector<DatasetRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DatasetRow r;
      if (j.at("kind") == "t2i") {
        r.kind = DatasetKind::kT2i;
        r.tokens = j.at("caption").at("ids").get<TokenIds>();
        r.image = read_ppm((root / j.at("image").get<std::string>()).string());
      } else if (j.at("kind") == "edit") {
        r.kind = DatasetKind::kEdit;
        r.tokens = j.at("instruction").at("ids").get<TokenIds>();
        r.source = read_ppm((root / j.at("source").get<std::string>()).string());
        r.image = read_ppm((root / j.at("target").get<std::string>()).string());
      } else {
        throw std::runtime_error("unknown row kind");
      }
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(index_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (rows.empty()) throw std::runtime_error("dataset index is empty: " + index_path);
  return rows;
}

bool verify_edit_row(const DatasetRow& row, int grid) {
  if (row.kind != DatasetKind::kEdit) return false;
  ParseOptions opts;
  opts.grid = grid;
  const ParseResult src = parse_image(row.source, opts);
  const ParseResult tgt = parse_image(row.image, opts);
  if (!src.ok || !tgt.ok) return false;
  const auto op = parse_instruction(row.tokens, src.spec);
  if (!op) return false;
  try {
    return apply_edit(src.spec, *op) == tgt.spec;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

}  // namespace lddr
