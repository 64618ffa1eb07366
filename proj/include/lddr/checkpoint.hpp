// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lddr/tensor.hpp"

namespace lddr {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Layout (little-endian):
///   "LDDR" | u32 version | u32 blob length | blob (JSON text) | u32 count |
///   count x (u16 name length | name | u8 dtype | u8 rank | rank x u32 dim |
///   f32 payload) | u32 CRC-32 of every preceding byte
struct Checkpoint {
  std::string config_json;
  std::vector<NamedTensor> tensors;

  const Tensor& at(const std::string& name) const;
  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, version, truncation or CRC mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace lddr
