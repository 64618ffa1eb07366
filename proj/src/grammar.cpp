// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/grammar.hpp"

#include <algorithm>
#include <sstream>

namespace lddr {

namespace {

constexpr std::string_view kNumberWords[] = {"two", "three", "four"};

std::optional<Color> color_from_word(std::string_view w) {
  for (std::size_t c = 0; c < kNumColors; ++c) {
    if (color_name(static_cast<Color>(c)) == w) return static_cast<Color>(c);
  }
  return std::nullopt;
}

std::optional<ShapeKind> shape_from_word(std::string_view w, bool plural) {
  for (std::size_t s = 0; s < kNumShapes; ++s) {
    const auto k = static_cast<ShapeKind>(s);
    if ((plural ? shape_plural(k) : shape_name(k)) == w) return k;
  }
  return std::nullopt;
}

class TokenWriter {
 public:
  TokenWriter& operator<<(std::string_view word) {
    ids_.push_back(Vocabulary::get().id(word));
    return *this;
  }
  TokenWriter& object(const SceneObject& o) {
    return *this << "a" << color_name(o.color) << shape_name(o.shape);
  }
  TokenIds take() { return std::move(ids_); }

 private:
  TokenIds ids_;
};

class TokenReader {
 public:
  explicit TokenReader(std::span<const std::int32_t> ids) : ids_(ids) {}
  bool done() const { return pos_ >= ids_.size(); }
  std::optional<std::string_view> peek() const {
    if (done()) return std::nullopt;
    const auto id = ids_[pos_];
    if (id < 0 || static_cast<std::size_t>(id) >= Vocabulary::get().size()) return std::nullopt;
    return Vocabulary::get().word(id);
  }
  bool accept(std::string_view w) {
    if (peek() == w) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::optional<std::string_view> next() {
    auto w = peek();
    if (w) ++pos_;
    return w;
  }
  /// "a <color> <shape>"
  std::optional<SceneObject> object() {
    if (!accept("a")) return std::nullopt;
    auto cw = next();
    auto sw = next();
    if (!cw || !sw) return std::nullopt;
    auto c = color_from_word(*cw);
    auto s = shape_from_word(*sw, false);
    if (!c || !s) return std::nullopt;
    return SceneObject{*s, *c, 0};
  }

 private:
  std::span<const std::int32_t> ids_;
  std::size_t pos_ = 0;
};

bool all_identical(const SceneSpec& spec) {
  for (const auto& o : spec.objects) {
    if (o.shape != spec.objects[0].shape || o.color != spec.objects[0].color) return false;
  }
  return true;
}

int first_match(const SceneSpec& spec, Color color, ShapeKind shape) {
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (spec.objects[i].color == color && spec.objects[i].shape == shape) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<bos>", "<eos>", "a",       "and",       "above",  "below",   "left",
            "right", "of",    "red",   "green",   "blue",      "yellow", "magenta", "cyan",
            "circle", "square", "triangle", "circles", "squares", "triangles", "two", "three",
            "four",  "make",  "the",   "add",     "remove"};
}

const Vocabulary& Vocabulary::get() {
  static const Vocabulary vocab;
  return vocab;
}

std::int32_t Vocabulary::id(std::string_view word) const {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] == word) return static_cast<std::int32_t>(i);
  }
  std::string msg = "unknown word '" + std::string(word) + "'; vocabulary:";
  for (std::size_t i = 3; i < words_.size(); ++i) msg += " " + words_[i];
  throw VocabularyError(msg);
}

TokenIds Vocabulary::tokenize(std::string_view text) const {
  TokenIds ids;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) {
    const std::int32_t i = id(w);
    if (i < 3) throw VocabularyError("special token '" + w + "' is not allowed in prompts");
    ids.push_back(i);
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t i : ids) {
    if (!out.empty()) out += ' ';
    out += word(i);
  }
  return out;
}

TokenIds caption(const SceneSpec& spec, std::uint64_t grammar_seed) {
  SceneSpec s = spec;
  s.normalize();
  TokenWriter w;
  const auto& objs = s.objects;
  if (objs.empty()) return {};
  if (objs.size() >= 2 && all_identical(s)) {
    w << kNumberWords[objs.size() - 2] << color_name(objs[0].color) << shape_plural(objs[0].shape);
    return w.take();
  }
  if (objs.size() == 2) {
    const SceneObject& a = objs[0];
    const SceneObject& b = objs[1];
    if (s.col_of(a.cell) == s.col_of(b.cell)) {
      if (grammar_seed % 2 == 0) {
        w.object(a) << "above";
        w.object(b);
      } else {
        w.object(b) << "below";
        w.object(a);
      }
      return w.take();
    }
    if (s.row_of(a.cell) == s.row_of(b.cell)) {
      switch (grammar_seed % 3) {
        case 0:
          w.object(a) << "and";
          w.object(b);
          break;
        case 1:
          w.object(a) << "left" << "of";
          w.object(b);
          break;
        default:
          w.object(b) << "right" << "of";
          w.object(a);
          break;
      }
      return w.take();
    }
  }
  for (std::size_t i = 0; i < objs.size(); ++i) {
    if (i) w << "and";
    w.object(objs[i]);
  }
  return w.take();
}

std::optional<SceneSpec> scene_from_caption(std::span<const std::int32_t> tokens, int grid,
                                            int img_side) {
  SceneSpec spec;
  spec.grid = grid;
  spec.img_side = img_side;
  if (tokens.empty()) return spec;
  TokenReader r(tokens);

  for (std::size_t n = 0; n < 3; ++n) {
    if (r.accept(kNumberWords[n])) {
      auto cw = r.next();
      auto sw = r.next();
      if (!cw || !sw || !r.done()) return std::nullopt;
      auto c = color_from_word(*cw);
      auto sh = shape_from_word(*sw, true);
      if (!c || !sh || static_cast<int>(n + 2) > grid * grid) return std::nullopt;
      for (std::size_t i = 0; i < n + 2; ++i) {
        spec.objects.push_back({*sh, *c, static_cast<int>(i)});
      }
      return spec;
    }
  }

  auto first = r.object();
  if (!first) return std::nullopt;
  if (r.done()) {
    spec.objects.push_back(*first);
    return spec;
  }
  auto relate = [&](SceneObject upper_or_left, SceneObject other, int other_cell) {
    upper_or_left.cell = 0;
    other.cell = other_cell;
    spec.objects = {upper_or_left, other};
    spec.normalize();
  };
  if (r.accept("above") || r.accept("below")) {
    const bool above = tokens.size() > 3 && Vocabulary::get().word(tokens[3]) == "above";
    auto second = r.object();
    if (!second || !r.done()) return std::nullopt;
    if (above) relate(*first, *second, grid);
    else relate(*second, *first, grid);
    return spec;
  }
  if (r.accept("left") || r.accept("right")) {
    const bool left = Vocabulary::get().word(tokens[3]) == "left";
    if (!r.accept("of")) return std::nullopt;
    auto second = r.object();
    if (!second || !r.done()) return std::nullopt;
    if (left) relate(*first, *second, 1);
    else relate(*second, *first, 1);
    return spec;
  }
  std::vector<SceneObject> objs{*first};
  while (r.accept("and")) {
    auto next = r.object();
    if (!next) return std::nullopt;
    objs.push_back(*next);
  }
  if (!r.done() || objs.size() > kMaxObjects || static_cast<int>(objs.size()) > grid * grid) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < objs.size(); ++i) {
    objs[i].cell = static_cast<int>(i);
    spec.objects.push_back(objs[i]);
  }
  return spec;
}

CaptionedScene sample_captioned_scene(Rng& rng, int grid, int img_side) {
  auto random_object = [&rng]() {
    SceneObject o;
    o.shape = static_cast<ShapeKind>(rng.uniform_int(kNumShapes));
    o.color = static_cast<Color>(rng.uniform_int(kNumColors));
    return o;
  };
  SceneSpec spec;
  spec.grid = grid;
  spec.img_side = img_side;
  const double u = rng.uniform();
  if (u < 0.35) {
    spec.objects.push_back(random_object());
  } else if (u < 0.75) {
    SceneObject a = random_object(), b = random_object();
    while (b.shape == a.shape && b.color == a.color) b = random_object();
    a.cell = 0;
    b.cell = rng.bernoulli(0.5) ? 1 : grid;
    spec.objects = {a, b};
  } else if (u < 0.88) {
    const SceneObject o = random_object();
    const int n = 2 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < n; ++i) spec.objects.push_back({o.shape, o.color, i});
  } else {
    const int n = 3 + static_cast<int>(rng.uniform_int(2));
    for (int i = 0; i < n; ++i) {
      SceneObject o = random_object();
      o.cell = i;
      spec.objects.push_back(o);
    }
    if (all_identical(spec)) {
      spec.objects.back().color =
          static_cast<Color>((static_cast<int>(spec.objects.back().color) + 1) % kNumColors);
    }
  }
  CaptionedScene out;
  out.tokens = caption(spec, rng.next_u64());
  out.spec = std::move(spec);
  return out;
}

SceneSpec apply_edit(const SceneSpec& source, const EditOp& op) {
  SceneSpec target = source;
  const auto idx = static_cast<std::size_t>(op.object_index);
  switch (op.kind) {
    case EditKind::kRecolor:
      if (idx >= target.objects.size()) throw std::invalid_argument("recolor: no such object");
      target.objects[idx].color = op.new_color;
      break;
    case EditKind::kRemove:
      if (idx >= target.objects.size()) throw std::invalid_argument("remove: no such object");
      target.objects.erase(target.objects.begin() + static_cast<std::ptrdiff_t>(idx));
      break;
    case EditKind::kAdd: {
      if (target.objects.size() >= kMaxObjects) throw std::invalid_argument("add: scene is full");
      std::vector<bool> used(static_cast<std::size_t>(target.cell_count()), false);
      for (const auto& o : target.objects) used[o.cell] = true;
      int free_cell = -1;
      for (int c = 0; c < target.cell_count() && free_cell < 0; ++c) {
        if (!used[c]) free_cell = c;
      }
      if (free_cell < 0) throw std::invalid_argument("add: no free cell");
      SceneObject o = op.added;
      o.cell = free_cell;
      target.objects.push_back(o);
      target.normalize();
      break;
    }
  }
  target.validate();
  return target;
}

TokenIds edit_instruction(const SceneSpec& source, const EditOp& op) {
  TokenWriter w;
  switch (op.kind) {
    case EditKind::kRecolor: {
      const auto& o = source.objects.at(static_cast<std::size_t>(op.object_index));
      if (first_match(source, o.color, o.shape) != op.object_index) {
        throw std::invalid_argument("recolor target is not the first object of its kind");
      }
      w << "make" << "the" << color_name(o.color) << shape_name(o.shape)
        << color_name(op.new_color);
      break;
    }
    case EditKind::kRemove: {
      const auto& o = source.objects.at(static_cast<std::size_t>(op.object_index));
      if (first_match(source, o.color, o.shape) != op.object_index) {
        throw std::invalid_argument("remove target is not the first object of its kind");
      }
      w << "remove" << "the" << color_name(o.color) << shape_name(o.shape);
      break;
    }
    case EditKind::kAdd:
      w << "add";
      w.object(op.added);
      break;
  }
  return w.take();
}

std::optional<EditOp> parse_instruction(std::span<const std::int32_t> tokens,
                                        const SceneSpec& source) {
  TokenReader r(tokens);
  EditOp op;
  auto read_ref = [&]() -> std::optional<int> {
    if (!r.accept("the")) return std::nullopt;
    auto cw = r.next();
    auto sw = r.next();
    if (!cw || !sw) return std::nullopt;
    auto c = color_from_word(*cw);
    auto s = shape_from_word(*sw, false);
    if (!c || !s) return std::nullopt;
    const int idx = first_match(source, *c, *s);
    if (idx < 0) return std::nullopt;
    return idx;
  };
  if (r.accept("make")) {
    auto idx = read_ref();
    if (!idx) return std::nullopt;
    auto cw = r.next();
    if (!cw || !r.done()) return std::nullopt;
    auto c = color_from_word(*cw);
    if (!c) return std::nullopt;
    op.kind = EditKind::kRecolor;
    op.object_index = *idx;
    op.new_color = *c;
    return op;
  }
  if (r.accept("remove")) {
    auto idx = read_ref();
    if (!idx || !r.done()) return std::nullopt;
    op.kind = EditKind::kRemove;
    op.object_index = *idx;
    return op;
  }
  if (r.accept("add")) {
    auto o = r.object();
    if (!o || !r.done()) return std::nullopt;
    op.kind = EditKind::kAdd;
    op.added = *o;
    return op;
  }
  return std::nullopt;
}

EditSpec sample_edit(Rng& rng, int grid, int img_side, bool recolor_only) {
  EditSpec e;
  e.source = sample_captioned_scene(rng, grid, img_side).spec;
  const int n = static_cast<int>(e.source.objects.size());
  EditKind kind = EditKind::kRecolor;
  if (!recolor_only) {
    const auto k = rng.uniform_int(3);
    kind = static_cast<EditKind>(k);
    if (kind == EditKind::kAdd && n >= std::min<int>(kMaxObjects, e.source.cell_count())) {
      kind = EditKind::kRecolor;
    }
  }
  e.op.kind = kind;
  if (kind == EditKind::kAdd) {
    e.op.added.shape = static_cast<ShapeKind>(rng.uniform_int(kNumShapes));
    e.op.added.color = static_cast<Color>(rng.uniform_int(kNumColors));
  } else {
    int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    const auto& o = e.source.objects[static_cast<std::size_t>(idx)];
    idx = first_match(e.source, o.color, o.shape);
    e.op.object_index = idx;
    if (kind == EditKind::kRecolor) {
      const auto shift = 1 + rng.uniform_int(kNumColors - 1);
      e.op.new_color = static_cast<Color>((static_cast<std::size_t>(o.color) + shift) % kNumColors);
    }
  }
  e.target = apply_edit(e.source, e.op);
  return e;
}

}  // namespace lddr
