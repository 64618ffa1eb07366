// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lddr/rng.hpp"
#include "lddr/tensor.hpp"

namespace lddr {

enum class ShapeKind : std::uint8_t { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum class Color : std::uint8_t { kRed = 0, kGreen, kBlue, kYellow, kMagenta, kCyan };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 6;
inline constexpr std::size_t kMaxObjects = 4;

std::string_view shape_name(ShapeKind s);
std::string_view shape_plural(ShapeKind s);
std::string_view color_name(Color c);
/// RGB anchor in [0, 1].
std::array<float, 3> color_rgb(Color c);

struct SceneObject {
  ShapeKind shape = ShapeKind::kCircle;
  Color color = Color::kRed;
  int cell = 0;  ///< row-major index into the grid

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// A scene of up to four shapes on a grid of cells, objects kept sorted by
/// cell. Images are [img_side x img_side x 3] tensors in [-1, 1].
struct SceneSpec {
  std::vector<SceneObject> objects;
  int grid = 2;
  int img_side = 16;

  int cell_count() const { return grid * grid; }
  int cell_size() const { return img_side / grid; }
  int row_of(int cell) const { return cell / grid; }
  int col_of(int cell) const { return cell % grid; }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  /// Sorts objects by cell.
  void normalize();
  std::string to_string() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Rasterizes a scene: white canvas, flat-colored shapes centred in their
/// cells, no anti-aliasing. Output in [-1, 1].
Tensor render(const SceneSpec& spec);

/// Pixel footprint of a shape drawn in `cell`; row-major mask over the image.
std::vector<std::uint8_t> shape_footprint(ShapeKind shape, int cell, int grid, int img_side);

struct ParseOptions {
  int grid = 2;
  /// Max RGB distance (in [0,1] units) between a blob's mean colour and its
  /// palette anchor.
  double color_tolerance = 0.35;
  /// A pixel is foreground when its distance from white exceeds this.
  double foreground_threshold = 0.5;
  /// Cells with fewer foreground pixels are treated as empty.
  int min_blob_pixels = 6;
  /// Minimum intersection-over-union with the best-matching footprint.
  double min_shape_iou = 0.5;
};

struct ParseResult {
  bool ok = false;
  SceneSpec spec;
  std::string reason;
};

/// Oracle detector: per cell, finds the foreground blob, assigns the nearest
/// palette colour and the best-matching shape footprint. Accepts images in
/// [-1, 1] or [0, 1] (detected from the value range).
ParseResult parse_image(const Tensor& image, const ParseOptions& opts = {});

/// Uniformly random valid scene with 1..max_objects objects in random cells.
SceneSpec random_scene(Rng& rng, int grid, int img_side, int max_objects = 4);

/// Every single-object scene for a grid (shapes x colours x cells).
std::vector<SceneSpec> all_single_object_scenes(int grid, int img_side);

}  // namespace lddr
