// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lddr/bench.hpp"
#include "lddr/checkpoint.hpp"
#include "lddr/model.hpp"
#include "lddr/optim.hpp"

namespace lddr {

/// Linear warmup 0 -> lr_max over [0, warmup], then cosine decay to lr_min at
/// total_steps.
double lr_at(long step, long total_steps, long warmup, double lr_max, double lr_min);

enum class GuardDecision { kApply, kSkip };

struct SpikeGuardState {
  GuardConfig cfg;
  std::deque<double> norms;   ///< accepted steps only
  std::deque<double> losses;  ///< accepted steps only
  long seen = 0;              ///< decisions made in the current stage
  long skipped = 0;

  /// Called at each stage boundary: empties the window and restarts `seen`.
  void start_stage();

  nlohmann::json to_json() const;
  static SpikeGuardState from_json(const nlohmann::json& j, const GuardConfig& cfg);
};

/// Skips on non-finite input, grad_norm > abs_cap, or (after warmup_exempt
/// decisions, with a full window) grad_norm or loss above factor x the window
/// median. Accepted values enter the window.
GuardDecision spike_guard(SpikeGuardState& state, double grad_norm, double loss);

double median(std::deque<double> values);

struct MetricsRecord {
  long step = 0;  ///< global 1-based step
  std::string stage;
  double loss = 0;
  double grad_norm = 0;
  double lr = 0;
  bool skipped = false;
  std::optional<double> val_loss;

  nlohmann::json to_json() const;
};

/// One training example: the prompt seen by the MLLM and the flow sample.
struct TrainExample {
  PromptSequence prompt;
  FlowSample<float> sample;
  bool dropped = false;  ///< prompt replaced by the null prompt
};

struct TrainBatch {
  std::vector<TrainExample> examples;
  std::uint64_t digest = 0;
};

/// Deterministic per-index data source for one stage.
class StageData {
 public:
  StageData(const RunConfig& cfg, int stage_index);
  /// Batch for 0-based step `step` of the stage.
  TrainBatch batch(long step) const;
  /// Fixed held-out examples (independent of training indices).
  std::vector<TrainExample> validation(int count) const;

 private:
  TrainExample example(Rng rng, bool allow_dropout) const;

  RunConfig cfg_;
  int stage_index_;
  std::shared_ptr<const std::vector<DatasetRow>> rows_;
};

struct TrainState {
  int stage_index = 0;
  long step_in_stage = 0;
  long global_step = 0;
  SpikeGuardState guard;
};

struct TrainHooks {
  /// Global 1-based steps whose loss is multiplied by 100.
  std::set<long> spike_steps;
  /// Stop (with a checkpoint) once this many global steps have run.
  long stop_after = -1;
  /// Evaluate held-out fm_loss every this many steps (0 = never).
  int validate_every = 0;
  int validation_samples = 64;
  std::function<void(const MetricsRecord&, const TrainBatch&)> on_step;
};

struct PipelineOptions {
  std::string out_dir;       ///< empty: no files written
  std::string metrics_path;  ///< empty: <out_dir>/metrics.jsonl
  TrainHooks hooks;
};

struct PipelineResult {
  std::vector<MetricsRecord> metrics;
  std::vector<std::string> checkpoints;
  std::vector<std::uint64_t> batch_digests;
  bool completed = false;
};

/// Owns the model, optimizer and guard; single-threaded.
class Trainer {
 public:
  /// Fresh run: initializes the model and runs toy MLLM pretraining.
  explicit Trainer(const RunConfig& cfg);
  /// Resumes from a checkpoint written by checkpoint().
  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt);

  LadderModel<float>& model() { return *model_; }
  AdamW& optimizer() { return opt_; }
  TrainState& state() { return state_; }
  const RunConfig& config() const { return cfg_; }
  const PretrainReport& pretrain_report() const { return pretrain_; }

  /// Forward, backward, guard and (on apply) one AdamW update at the stage's
  /// lr for the current step. Advances the step counters either way.
  MetricsRecord train_step(const TrainBatch& batch, bool inject_spike = false);

  /// Mean fm_loss without gradient.
  double mean_loss(const std::vector<TrainExample>& examples);

  Checkpoint checkpoint() const;

  PipelineResult run(const PipelineOptions& opts);

 private:
  Trainer(const RunConfig& cfg, bool pretrain);

  RunConfig cfg_;
  std::unique_ptr<LadderModel<float>> model_;
  AdamW opt_;
  TrainState state_;
  PretrainReport pretrain_;
};

/// Model parameters only (no optimizer or training state).
void load_model_params(LadderModel<float>& model, const Checkpoint& ckpt);
/// Config stored in a checkpoint.
RunConfig checkpoint_config(const Checkpoint& ckpt);
/// Rebuilds a model for inference from a checkpoint.
std::unique_ptr<LadderModel<float>> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace lddr
