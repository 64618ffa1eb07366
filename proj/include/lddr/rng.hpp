// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace lddr {

/// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Counter-based generator: the n-th draw is mix(key, n), so any draw can be
/// reproduced from (key, counter) alone.
///
/// Sub-streams are derived as key' = mix(key ^ fnv1a64(purpose) ^ mix(index)),
/// which gives every (purpose, sample index) pair its own independent sequence
/// regardless of how many draws other streams consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x6c64647253656564ULL)) {}

  Rng stream(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  static Rng from_state(std::uint64_t key, std::uint64_t counter);

 private:
  Rng() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace lddr
