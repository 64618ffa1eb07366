// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace lddr {

std::vector<std::uint32_t> patchify_map(int img_side, int patch) {
  if (patch <= 0 || img_side % patch != 0) {
    throw DimensionError("image side " + std::to_string(img_side) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const int per_row = img_side / patch;
  std::vector<std::uint32_t> map;
  map.reserve(static_cast<std::size_t>(img_side * img_side * 3));
  for (int pr = 0; pr < per_row; ++pr) {
    for (int pc = 0; pc < per_row; ++pc) {
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          const int py = pr * patch + y, px = pc * patch + x;
          for (int ch = 0; ch < 3; ++ch) {
            map.push_back(static_cast<std::uint32_t>((py * img_side + px) * 3 + ch));
          }
        }
      }
    }
  }
  return map;
}

std::vector<std::uint32_t> unpatchify_map(int img_side, int patch) {
  const auto fwd = patchify_map(img_side, patch);
  std::vector<std::uint32_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

std::uint8_t to_byte(float v) {
  const double unit = (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) * 0.5 * 255.0;
  // std::round rounds half away from zero.
  return static_cast<std::uint8_t>(std::round(unit));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f * 2.0f - 1.0f; }

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("encode_ppm: expected [H x W x 3], got " + shape_str(image.shape()));
  }
  const std::string header = "P6\n" + std::to_string(image.dim(1)) + " " +
                             std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (float v : image.vec()) out.push_back(to_byte(v));
  return out;
}

void write_ppm(const std::string& path, const Tensor& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  if (token() != "P6") throw std::runtime_error("not a binary P6 pixmap");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error("malformed P6 header");
  }
  if (maxval != 255 || w <= 0 || h <= 0) throw std::runtime_error("unsupported P6 geometry or depth");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + n) throw std::runtime_error("truncated P6 payload");
  Tensor img(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
  for (std::size_t i = 0; i < n; ++i) img[i] = from_byte(bytes[pos + i]);
  return img;
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace lddr
