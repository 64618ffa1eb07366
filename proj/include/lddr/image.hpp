// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lddr/tensor.hpp"

namespace lddr {

/// Index map for [side x side x 3] -> [patches x patch*patch*3]: patches in
/// row-major order, pixels row-major within a patch, channels innermost.
/// out.flat[i] = image.flat[map[i]].
std::vector<std::uint32_t> patchify_map(int img_side, int patch);

/// Inverse of patchify_map.
std::vector<std::uint32_t> unpatchify_map(int img_side, int patch);

template <typename T>
BasicTensor<T> patchify(const BasicTensor<T>& image, int patch) {
  const int side = static_cast<int>(image.dim(0));
  const auto map = patchify_map(side, patch);
  const std::size_t per = static_cast<std::size_t>(patch * patch * 3);
  BasicTensor<T> out(Shape{map.size() / per, per});
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = image[map[i]];
  return out;
}

/// Writes a binary P6 pixmap, mapping [-1, 1] to [0, 255] with
/// round-half-away-from-zero after clamping.
void write_ppm(const std::string& path, const Tensor& image);
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

/// Reads a binary P6 pixmap into [-1, 1].
Tensor read_ppm(const std::string& path);
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);

std::uint8_t to_byte(float signed_value);
float from_byte(std::uint8_t b);

}  // namespace lddr
