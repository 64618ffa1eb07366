// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lddr {

std::string_view shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

std::string_view shape_plural(ShapeKind s) {
  switch (s) {
    case ShapeKind::kCircle: return "circles";
    case ShapeKind::kSquare: return "squares";
    case ShapeKind::kTriangle: return "triangles";
  }
  return "?";
}

std::string_view color_name(Color c) {
  static constexpr std::array<std::string_view, kNumColors> kNames = {
      "red", "green", "blue", "yellow", "magenta", "cyan"};
  return kNames[static_cast<std::size_t>(c)];
}

std::array<float, 3> color_rgb(Color c) {
  static constexpr std::array<std::array<float, 3>, kNumColors> kRgb = {{
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}}};
  return kRgb[static_cast<std::size_t>(c)];
}

void SceneSpec::validate() const {
  if (grid != 2 && grid != 3) throw std::invalid_argument("scene grid must be 2 or 3");
  if (img_side <= 0 || img_side % grid != 0) {
    throw std::invalid_argument("scene img_side " + std::to_string(img_side) +
                                " not divisible by grid " + std::to_string(grid));
  }
  if (objects.size() > kMaxObjects) throw std::invalid_argument("scene has more than 4 objects");
  std::vector<bool> used(static_cast<std::size_t>(cell_count()), false);
  for (const SceneObject& o : objects) {
    if (o.cell < 0 || o.cell >= cell_count()) {
      throw std::invalid_argument("object cell " + std::to_string(o.cell) + " outside grid");
    }
    if (used[o.cell]) throw std::invalid_argument("two objects share cell " + std::to_string(o.cell));
    used[o.cell] = true;
    if (static_cast<std::size_t>(o.color) >= kNumColors ||
        static_cast<std::size_t>(o.shape) >= kNumShapes) {
      throw std::invalid_argument("object attribute outside palette");
    }
  }
}

void SceneSpec::normalize() {
  std::sort(objects.begin(), objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
}

std::string SceneSpec::to_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i) os << ", ";
    os << color_name(objects[i].color) << ' ' << shape_name(objects[i].shape) << '@'
       << objects[i].cell;
  }
  os << '}';
  return os.str();
}

std::vector<std::uint8_t> shape_footprint(ShapeKind shape, int cell, int grid, int img_side) {
  const double c = static_cast<double>(img_side) / grid;
  const double cx = (cell % grid) * c + c / 2;
  const double cy = (cell / grid) * c + c / 2;
  const double half = 0.375 * c;
  const double radius = 0.33 * c;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(img_side * img_side), 0);
  for (int y = 0; y < img_side; ++y) {
    for (int x = 0; x < img_side; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      bool inside = false;
      switch (shape) {
        case ShapeKind::kSquare:
          inside = std::abs(dx) <= half && std::abs(dy) <= half;
          break;
        case ShapeKind::kCircle:
          inside = dx * dx + dy * dy <= radius * radius;
          break;
        case ShapeKind::kTriangle: {
          // Apex up; half-width grows linearly to `half` at the base.
          if (dy < -half || dy > half) break;
          const double w = half * (dy + half) / (2 * half) + 0.03125 * c;
          inside = std::abs(dx) <= w;
          break;
        }
      }
      mask[static_cast<std::size_t>(y * img_side + x)] = inside ? 1 : 0;
    }
  }
  return mask;
}

Tensor render(const SceneSpec& spec) {
  spec.validate();
  const int side = spec.img_side;
  Tensor img = Tensor::filled(Shape{static_cast<std::size_t>(side), static_cast<std::size_t>(side), 3},
                              1.0f);
  for (const SceneObject& o : spec.objects) {
    const auto mask = shape_footprint(o.shape, o.cell, spec.grid, side);
    const auto rgb = color_rgb(o.color);
    for (std::size_t p = 0; p < mask.size(); ++p) {
      if (!mask[p]) continue;
      for (int ch = 0; ch < 3; ++ch) img[p * 3 + ch] = rgb[ch] * 2.0f - 1.0f;
    }
  }
  return img;
}

ParseResult parse_image(const Tensor& image, const ParseOptions& opts) {
  ParseResult result;
  if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1)) {
    result.reason = "image shape " + shape_str(image.shape()) + " is not square RGB";
    return result;
  }
  const int side = static_cast<int>(image.dim(0));
  if (side % opts.grid != 0) {
    result.reason = "image side not divisible by grid";
    return result;
  }
  float lo = 0;
  for (float v : image.vec()) lo = std::min(lo, v);
  const bool signed_range = lo < -0.5f;
  auto unit = [&](std::size_t i) {
    const float v = image[i];
    return std::clamp(signed_range ? (v + 1.0f) * 0.5f : v, 0.0f, 1.0f);
  };

  SceneSpec spec;
  spec.grid = opts.grid;
  spec.img_side = side;
  const int cs = side / opts.grid;
  for (int cell = 0; cell < opts.grid * opts.grid; ++cell) {
    const int r0 = (cell / opts.grid) * cs, c0 = (cell % opts.grid) * cs;
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(side * side), 0);
    int count = 0;
    double sum[3] = {0, 0, 0};
    for (int y = r0; y < r0 + cs; ++y) {
      for (int x = c0; x < c0 + cs; ++x) {
        const std::size_t p = static_cast<std::size_t>(y * side + x);
        const double r = unit(p * 3), g = unit(p * 3 + 1), b = unit(p * 3 + 2);
        const double dist = std::sqrt((1 - r) * (1 - r) + (1 - g) * (1 - g) + (1 - b) * (1 - b));
        if (dist > opts.foreground_threshold) {
          fg[p] = 1;
          ++count;
          sum[0] += r;
          sum[1] += g;
          sum[2] += b;
        }
      }
    }
    if (count < opts.min_blob_pixels) continue;

    Color best_color = Color::kRed;
    double best_dist = 1e9;
    for (std::size_t ci = 0; ci < kNumColors; ++ci) {
      const auto rgb = color_rgb(static_cast<Color>(ci));
      double d = 0;
      for (int ch = 0; ch < 3; ++ch) {
        const double m = sum[ch] / count - rgb[ch];
        d += m * m;
      }
      d = std::sqrt(d);
      if (d < best_dist) {
        best_dist = d;
        best_color = static_cast<Color>(ci);
      }
    }
    if (best_dist > opts.color_tolerance) {
      result.reason = "cell " + std::to_string(cell) + " blob colour matches no palette entry";
      return result;
    }

    ShapeKind best_shape = ShapeKind::kCircle;
    double best_iou = -1;
    for (std::size_t si = 0; si < kNumShapes; ++si) {
      const auto tmpl = shape_footprint(static_cast<ShapeKind>(si), cell, opts.grid, side);
      int inter = 0, uni = 0;
      for (std::size_t p = 0; p < tmpl.size(); ++p) {
        inter += (tmpl[p] && fg[p]) ? 1 : 0;
        uni += (tmpl[p] || fg[p]) ? 1 : 0;
      }
      const double iou = uni ? static_cast<double>(inter) / uni : 0.0;
      if (iou > best_iou) {
        best_iou = iou;
        best_shape = static_cast<ShapeKind>(si);
      }
    }
    if (best_iou < opts.min_shape_iou) {
      result.reason = "cell " + std::to_string(cell) + " blob matches no shape footprint";
      return result;
    }
    spec.objects.push_back({best_shape, best_color, cell});
  }
  if (spec.objects.size() > kMaxObjects) {
    result.reason = "more than four blobs";
    return result;
  }
  result.ok = true;
  result.spec = std::move(spec);
  return result;
}

SceneSpec random_scene(Rng& rng, int grid, int img_side, int max_objects) {
  SceneSpec spec;
  spec.grid = grid;
  spec.img_side = img_side;
  const int cells = grid * grid;
  const int limit = std::min({max_objects, static_cast<int>(kMaxObjects), cells});
  const int count = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(limit)));
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[i] = i;
  for (int i = cells - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  }
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = static_cast<ShapeKind>(rng.uniform_int(kNumShapes));
    o.color = static_cast<Color>(rng.uniform_int(kNumColors));
    o.cell = order[i];
    spec.objects.push_back(o);
  }
  spec.normalize();
  return spec;
}

std::vector<SceneSpec> all_single_object_scenes(int grid, int img_side) {
  std::vector<SceneSpec> out;
  for (int cell = 0; cell < grid * grid; ++cell) {
    for (std::size_t s = 0; s < kNumShapes; ++s) {
      for (std::size_t c = 0; c < kNumColors; ++c) {
        SceneSpec spec;
        spec.grid = grid;
        spec.img_side = img_side;
        spec.objects.push_back({static_cast<ShapeKind>(s), static_cast<Color>(c), cell});
        out.push_back(spec);
      }
    }
  }
  return out;
}

}  // namespace lddr
