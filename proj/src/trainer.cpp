// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace lddr {

namespace fs = std::filesystem;

double lr_at(long step, long total_steps, long warmup, double lr_max, double lr_min) {
  if (total_steps < 1 || warmup < 0 || warmup >= total_steps) {
    throw std::invalid_argument("lr_at needs 0 <= warmup < total_steps (got warmup " +
                                std::to_string(warmup) + ", total " + std::to_string(total_steps) + ")");
  }
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  }
  if (step == warmup) return lr_max;
  if (step < warmup) return lr_max * (static_cast<double>(step) / static_cast<double>(warmup));
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * progress));
}

double median(std::deque<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty window");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

GuardDecision spike_guard(SpikeGuardState& s, double grad_norm, double loss) {
  const long index = s.seen++;
  bool skip = !std::isfinite(grad_norm) || !std::isfinite(loss) || grad_norm > s.cfg.abs_cap;
  const bool full = static_cast<int>(s.norms.size()) >= s.cfg.window;
  if (!skip && index >= s.cfg.warmup_exempt && full) {
    skip = grad_norm > s.cfg.factor * median(s.norms) || loss > s.cfg.factor * median(s.losses);
  }
  if (skip) {
    ++s.skipped;
    return GuardDecision::kSkip;
  }
  s.norms.push_back(grad_norm);
  s.losses.push_back(loss);
  while (static_cast<int>(s.norms.size()) > s.cfg.window) {
    s.norms.pop_front();
    s.losses.pop_front();
  }
  return GuardDecision::kApply;
}

void SpikeGuardState::start_stage() {
  norms.clear();
  losses.clear();
  seen = 0;
}

nlohmann::json SpikeGuardState::to_json() const {
  return {{"norms", std::vector<double>(norms.begin(), norms.end())},
          {"losses", std::vector<double>(losses.begin(), losses.end())},
          {"seen", seen},
          {"skipped", skipped}};
}

SpikeGuardState SpikeGuardState::from_json(const nlohmann::json& j, const GuardConfig& cfg) {
  SpikeGuardState s;
  s.cfg = cfg;
  const auto n = j.at("norms").get<std::vector<double>>();
  const auto l = j.at("losses").get<std::vector<double>>();
  s.norms.assign(n.begin(), n.end());
  s.losses.assign(l.begin(), l.end());
  s.seen = j.at("seen").get<long>();
  s.skipped = j.at("skipped").get<long>();
  return s;
}

nlohmann::json MetricsRecord::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"step", step}, {"stage", stage},   {"loss", num(loss)},
                      {"grad_norm", num(grad_norm)}, {"lr", lr}, {"skipped", skipped}};
  if (val_loss) j["val_loss"] = num(*val_loss);
  return j;
}

// ---- data --------------------------------------------------------------------

namespace {

std::uint64_t hash_bytes(const void* p, std::size_t n, std::uint64_t h) {
  return fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
}

std::uint64_t example_digest(const TrainExample& e, std::uint64_t h) {
  const std::uint64_t pd = e.prompt.digest();
  h = hash_bytes(&pd, sizeof(pd), h);
  h = hash_bytes(e.sample.x0.data(), e.sample.x0.size() * sizeof(float), h);
  h = hash_bytes(e.sample.x1.data(), e.sample.x1.size() * sizeof(float), h);
  return hash_bytes(&e.sample.t, sizeof(double), h);
}

}  // namespace

StageData::StageData(const RunConfig& cfg, int stage_index) : cfg_(cfg), stage_index_(stage_index) {
  const StageConfig& stage = cfg_.stages.at(static_cast<std::size_t>(stage_index));
  if (stage.dataset != "synthetic") {
    rows_ = std::make_shared<const std::vector<DatasetRow>>(load_dataset(stage.dataset));
  }
}

TrainExample StageData::example(Rng r, bool allow_dropout) const {
  const StageConfig& stage = cfg_.stages[static_cast<std::size_t>(stage_index_)];
  const int grid = cfg_.bench.grid, side = cfg_.dit.img_side;
  const bool edit_draw = r.bernoulli(stage.edit_fraction);
  bool edit = stage.name == "ti2i_pretrain" || (stage.name == "finetune" && edit_draw);
  TrainExample ex;
  Tensor x0;
  if (rows_) {
    const DatasetRow& row = (*rows_)[r.uniform_int(rows_->size())];
    edit = row.kind == DatasetKind::kEdit;
    ex.prompt = edit ? edit_prompt(row.tokens, row.source) : text_prompt(row.tokens);
    x0 = row.image;
  } else if (edit) {
    const EditSpec e = sample_edit(r, grid, side, stage.recolor_only);
    ex.prompt = edit_prompt(edit_instruction(e.source, e.op), render(e.source));
    x0 = render(e.target);
  } else {
    const CaptionedScene cs = sample_captioned_scene(r, grid, side);
    ex.prompt = text_prompt(cs.tokens);
    x0 = render(cs.spec);
  }
  const bool drop = r.bernoulli(cfg_.flow.cond_dropout);
  if (allow_dropout && drop) {
    ex.prompt = text_prompt({});
    ex.dropped = true;
  }
  ex.sample = make_flow_sample(x0, r);
  return ex;
}

TrainBatch StageData::batch(long step) const {
  const StageConfig& stage = cfg_.stages[static_cast<std::size_t>(stage_index_)];
  const Rng base = Rng(cfg_.seed)
                       .stream("train.stage", static_cast<std::uint64_t>(stage_index_))
                       .stream("step", static_cast<std::uint64_t>(step));
  TrainBatch b;
  b.digest = fnv1a64("batch");
  for (int i = 0; i < stage.batch_size; ++i) {
    b.examples.push_back(example(base.stream("example", static_cast<std::uint64_t>(i)), true));
    b.digest = example_digest(b.examples.back(), b.digest);
  }
  return b;
}

std::vector<TrainExample> StageData::validation(int count) const {
  const Rng base =
      Rng(cfg_.seed).stream("validation.stage", static_cast<std::uint64_t>(stage_index_));
  std::vector<TrainExample> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(example(base.stream("example", static_cast<std::uint64_t>(i)), false));
  }
  return out;
}

// ---- trainer -----------------------------------------------------------------

Trainer::Trainer(const RunConfig& cfg) : Trainer(cfg, true) {}

Trainer::Trainer(const RunConfig& cfg, bool pretrain)
    : cfg_(cfg), model_(std::make_unique<LadderModel<float>>(cfg)), opt_(cfg.optimizer) {
  state_.guard.cfg = cfg.guard;
  if (pretrain && cfg.mllm.pretrain_steps > 0) {
    pretrain_ = toy_pretrain(model_->mllm(), cfg.mllm.pretrain_steps, cfg.mllm.pretrain_batch,
                             cfg.mllm.pretrain_lr, mix64(cfg.seed ^ fnv1a64("pretrain")),
                             cfg.bench.grid);
  }
}

double Trainer::mean_loss(const std::vector<TrainExample>& examples) {
  double total = 0;
  for (const auto& ex : examples) {
    Graph<float> g(false);
    total += model_->loss(g, ex.prompt, ex.sample).value()[0];
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

MetricsRecord Trainer::train_step(const TrainBatch& batch, bool inject_spike) {
  if (state_.stage_index >= static_cast<int>(cfg_.stages.size())) {
    throw std::logic_error("train_step after the last stage");
  }
  const StageConfig& stage = cfg_.stages[static_cast<std::size_t>(state_.stage_index)];
  const auto params = model_->trainable_params();
  for (auto* p : params) p->zero_grad();
  const float inv_batch = 1.0f / static_cast<float>(batch.examples.size());
  double loss = 0;
  try {
    for (const auto& ex : batch.examples) {
      Graph<float> g(true);
      Var<float> l = model_->loss(g, ex.prompt, ex.sample);
      if (inject_spike) l = scale(l, 100.0f);
      g.backward(l, inv_batch);
      g.accumulate_param_grads();
      loss += l.value()[0];
    }
    loss /= static_cast<double>(batch.examples.size());
  } catch (const NonFiniteError&) {
    loss = std::numeric_limits<double>::quiet_NaN();
  }
  double sq = 0;
  for (auto* p : params) {
    for (float v : p->grad.vec()) sq += static_cast<double>(v) * v;
  }
  const double norm = std::isfinite(loss) ? std::sqrt(sq) : std::numeric_limits<double>::quiet_NaN();

  MetricsRecord rec;
  rec.stage = stage.name;
  rec.loss = loss;
  rec.grad_norm = norm;
  rec.lr = lr_at(state_.step_in_stage + 1, stage.steps, stage.warmup, stage.lr_max, stage.lr_min);
  rec.skipped = spike_guard(state_.guard, norm, loss) == GuardDecision::kSkip;
  if (rec.skipped) {
    for (auto* p : params) p->zero_grad();
  } else {
    opt_.step(params, rec.lr);
  }
  ++state_.step_in_stage;
  rec.step = ++state_.global_step;
  return rec;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  nlohmann::json blob;
  blob["config"] = to_json(cfg_);
  blob["state"] = {{"stage_index", state_.stage_index},
                   {"step_in_stage", state_.step_in_stage},
                   {"global_step", state_.global_step},
                   {"optimizer_steps", opt_.applied_steps()},
                   {"guard", state_.guard.to_json()}};
  c.config_json = blob.dump();
  for (auto* p : model_->all_params()) c.tensors.push_back({p->name, p->value});
  for (const auto& [name, mv] : opt_.moments()) {
    c.tensors.push_back({"opt.m/" + name, mv.first});
    c.tensors.push_back({"opt.v/" + name, mv.second});
  }
  return c;
}

RunConfig checkpoint_config(const Checkpoint& ckpt) {
  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config blob is not JSON: ") + e.what());
  }
  if (!blob.contains("config")) throw CheckpointError("checkpoint config blob has no config");
  return run_config_from_json(blob.at("config"));
}

void load_model_params(LadderModel<float>& model, const Checkpoint& ckpt) {
  for (auto* p : model.all_params()) {
    const Tensor& t = ckpt.at(p->name);
    if (t.shape() != p->value.shape()) {
      throw CheckpointError("tensor " + p->name + " has shape " + shape_str(t.shape()) +
                            ", model expects " + shape_str(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

std::unique_ptr<LadderModel<float>> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<LadderModel<float>>(checkpoint_config(ckpt));
  load_model_params(*model, ckpt);
  return model;
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ckpt) {
  const RunConfig cfg = checkpoint_config(ckpt);
  std::unique_ptr<Trainer> t(new Trainer(cfg, false));
  load_model_params(*t->model_, ckpt);
  for (auto* p : t->model_->trainable_params()) {
    const Tensor* m = ckpt.find("opt.m/" + p->name);
    const Tensor* v = ckpt.find("opt.v/" + p->name);
    if (!m || !v) continue;
    t->opt_.moments()[p->name] = {*m, *v};
  }
  const auto state = nlohmann::json::parse(ckpt.config_json).at("state");
  t->state_.stage_index = state.at("stage_index").get<int>();
  t->state_.step_in_stage = state.at("step_in_stage").get<long>();
  t->state_.global_step = state.at("global_step").get<long>();
  t->opt_.set_applied_steps(state.at("optimizer_steps").get<long>());
  t->state_.guard = SpikeGuardState::from_json(state.at("guard"), cfg.guard);
  return t;
}

PipelineResult Trainer::run(const PipelineOptions& opts) {
  PipelineResult res;
  const bool files = !opts.out_dir.empty();
  std::ofstream metrics;
  if (files) {
    fs::create_directories(opts.out_dir);
    const std::string path =
        opts.metrics_path.empty() ? (fs::path(opts.out_dir) / "metrics.jsonl").string() : opts.metrics_path;
    metrics.open(path, std::ios::app | std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write metrics to " + path);
  }
  auto save = [&](const std::string& name) {
    if (!files) return;
    const std::string path = (fs::path(opts.out_dir) / name).string();
    save_checkpoint(path, checkpoint());
    res.checkpoints.push_back(path);
  };
  const auto& hooks = opts.hooks;
  while (state_.stage_index < static_cast<int>(cfg_.stages.size())) {
    const StageConfig& stage = cfg_.stages[static_cast<std::size_t>(state_.stage_index)];
    const StageData data(cfg_, state_.stage_index);
    std::vector<TrainExample> val;
    if (hooks.validate_every > 0) val = data.validation(hooks.validation_samples);
    while (state_.step_in_stage < stage.steps) {
      if (hooks.stop_after >= 0 && state_.global_step >= hooks.stop_after) {
        save("stop_step" + std::to_string(state_.global_step) + ".lddr");
        return res;
      }
      const TrainBatch batch = data.batch(state_.step_in_stage);
      res.batch_digests.push_back(batch.digest);
      MetricsRecord rec = train_step(batch, hooks.spike_steps.count(state_.global_step + 1) > 0);
      if (hooks.validate_every > 0 && state_.step_in_stage % hooks.validate_every == 0) {
        rec.val_loss = mean_loss(val);
      }
      if (files) metrics << rec.to_json().dump() << '\n';
      if (hooks.on_step) hooks.on_step(rec, batch);
      res.metrics.push_back(std::move(rec));
      if (cfg_.checkpoint_every > 0 && state_.global_step % cfg_.checkpoint_every == 0 &&
          state_.step_in_stage < stage.steps) {
        save("step" + std::to_string(state_.global_step) + ".lddr");
      }
    }
    const std::string name = "stage" + std::to_string(state_.stage_index + 1) + "_" + stage.name + ".lddr";
    ++state_.stage_index;
    state_.step_in_stage = 0;
    state_.guard.start_stage();
    save(name);
  }
  res.completed = true;
  return res;
}

}  // namespace lddr
