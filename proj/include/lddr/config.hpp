// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace lddr {

struct MllmConfig {
  int layers = 8;  ///< m
  int width = 128;
  int heads = 4;
  int mlp_hidden = 256;
  int vocab = 29;
  int max_seq = 64;
  int patch = 4;
  int img_side = 16;
  /// Toy next-token pretraining before freezing (0 = random frozen weights).
  int pretrain_steps = 400;
  int pretrain_batch = 16;
  double pretrain_lr = 1e-3;

  int patches() const { return (img_side / patch) * (img_side / patch); }
  int patch_dim() const { return patch * patch * 3; }
};

struct DitConfig {
  int layers = 4;  ///< n
  int width = 64;
  int heads = 4;
  int mlp_hidden = 128;
  int img_side = 16;
  int patch = 4;
  int t_embed_dim = 64;

  int patches() const { return (img_side / patch) * (img_side / patch); }
  int patch_dim() const { return patch * patch * 3; }
};

enum class BridgeMode { kLadder, kFinalLayerOnly, kSharedConnector };

std::string to_string(BridgeMode mode);
BridgeMode bridge_mode_from_string(const std::string& s);

struct BridgeConfig {
  BridgeMode mode = BridgeMode::kLadder;
  int queries = 16;  ///< N
  int hidden = 0;    ///< connector width; 0 means d_mllm
  double query_init_std = 0.02;
};

struct FlowConfig {
  double cond_dropout = 0.1;
};

struct StageConfig {
  std::string name = "t2i_pretrain";  ///< t2i_pretrain | ti2i_pretrain | finetune
  std::string dataset = "synthetic";  ///< "synthetic" or a gen-data index.jsonl path
  int batch_size = 32;
  int steps = 150;
  int warmup = 5;
  double lr_max = 1e-4;
  double lr_min = 1e-5;
  /// finetune: fraction of editing samples (rest text-to-image).
  double edit_fraction = 0.5;
  /// Restrict generated edits to recolouring.
  bool recolor_only = false;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct GuardConfig {
  int window = 100;
  double factor = 3.0;
  double abs_cap = 100.0;
  int warmup_exempt = 0;
};

struct SamplerConfig {
  int steps = 50;
  double guidance_scale = 1.0;
  std::uint64_t seed = 0;
};

struct BenchConfig {
  int prompts_per_category = 64;
  int grid = 2;
};

/// Full run description; embedded verbatim in every checkpoint.
struct RunConfig {
  MllmConfig mllm;
  DitConfig dit;
  BridgeConfig bridge;
  FlowConfig flow;
  std::vector<StageConfig> stages;
  OptimizerConfig optimizer;
  GuardConfig guard;
  SamplerConfig sampler;
  BenchConfig bench;
  int checkpoint_every = 0;  ///< 0 = only at stage boundaries
  std::uint64_t seed = 0;

  int connector_hidden() const { return bridge.hidden > 0 ? bridge.hidden : mllm.width; }
};

/// Raised with every violated constraint, one per line.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Returns all constraint violations (empty when valid).
std::vector<std::string> validate(const RunConfig& cfg);

/// Parses and validates; unknown keys and all constraint violations are
/// reported together in one ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);

/// The desk recipe: three stages of 150/60/60 steps with warmup 5.
RunConfig desk_config();

}  // namespace lddr
