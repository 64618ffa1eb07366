// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lddr/tensor.hpp"

namespace lddr::cli {

/// User-facing failure; the message is printed verbatim.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker cap from LDDR_THREADS (default 1).
int thread_cap();

struct TrainArgs {
  std::string config;  ///< JSON config path; ignored when resuming
  std::string resume;  ///< checkpoint path
  std::string out_dir = "run";
  long stop_after = -1;
  int validate_every = 0;
};

/// {completed, checkpoints[], metrics, global_step}
nlohmann::json cmd_train(const TrainArgs& args);

struct SampleArgs {
  std::string checkpoint;
  std::string prompt;
  std::optional<int> steps;
  std::optional<double> guidance;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> bridge;  ///< must match the checkpoint's mode
  std::string out = "sample.ppm";
};

Tensor cmd_sample(const SampleArgs& args);

struct EditArgs {
  std::string checkpoint;
  std::string source;
  std::string instruction;
  std::optional<int> steps;
  std::optional<double> guidance;
  std::optional<std::uint64_t> seed;
  std::string out = "edit.ppm";
};

Tensor cmd_edit(const EditArgs& args);

struct EvalArgs {
  std::string checkpoint;  ///< empty with oracle = true
  bool oracle = false;     ///< score the render-the-caption oracle instead
  std::uint64_t suite_seed = 0;
  std::optional<int> per_category;
  std::optional<int> steps;
  int grid = 2;      ///< oracle mode only
  int img_side = 16;  ///< oracle mode only
  std::string out;   ///< optional report path
};

/// {scores, per_prompt}
nlohmann::json cmd_eval(const EvalArgs& args);

struct AblateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "ablate";
  std::optional<int> per_category;
};

/// Side-by-side ladder and final_layer_only runs.
nlohmann::json cmd_ablate(const AblateArgs& args);

struct GenDataArgs {
  std::string out_dir;
  int n = 100;
  std::string kind = "t2i";  ///< t2i | edit
  std::uint64_t seed = 0;
  int grid = 2;
  int img_side = 16;
  bool recolor_only = false;
};

void cmd_gen_data(const GenDataArgs& args);

struct GradCheckArgs {
  std::string config;  ///< empty: 8x8 pixels, m = 4, n = 2
  std::uint64_t seed = 0;
  std::size_t coords = 16;
  double tol = 1e-3;
};

/// Float64 finite-difference check of every trainable tensor through fm_loss.
nlohmann::json cmd_grad_check(const GradCheckArgs& args);

}  // namespace lddr::cli
