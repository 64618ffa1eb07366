// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>
#include <vector>

#include "lddr/bench.hpp"
#include "lddr/checkpoint.hpp"
#include "lddr/grad_check.hpp"
#include "lddr/image.hpp"
#include "lddr/model.hpp"
#include "lddr/trainer.hpp"

namespace lddr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int thread_cap() {
  const char* env = std::getenv("LDDR_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw CommandError("LDDR_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(n, 256));
}

namespace {

Checkpoint open_checkpoint(const std::string& path) {
  if (path.empty()) throw CommandError("a checkpoint path is required");
  return load_checkpoint(path);
}

TokenIds words(const std::string& text, const char* what) {
  const TokenIds ids = Vocabulary::get().tokenize(text);
  if (ids.empty()) throw CommandError(std::string(what) + " is empty");
  return ids;
}

SamplerConfig sampler_for(const RunConfig& cfg, std::optional<int> steps,
                          std::optional<double> guidance, std::optional<std::uint64_t> seed) {
  SamplerConfig s = cfg.sampler;
  if (steps) s.steps = *steps;
  if (guidance) s.guidance_scale = *guidance;
  if (seed) s.seed = *seed;
  if (s.steps < 1) throw CommandError("--steps must be >= 1");
  if (s.guidance_scale < 0) throw CommandError("--guidance must be >= 0");
  return s;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) return;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw CommandError("cannot write " + path);
}

json metrics_curve(const std::vector<MetricsRecord>& metrics) {
  json curve = json::array();
  for (const auto& m : metrics) curve.push_back(m.to_json());
  return curve;
}

/// Generates every prompt of the suite with per-thread model replicas.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<BenchPrompt>& suite,
                               const SamplerConfig& sampler) {
  const RunConfig cfg = checkpoint_config(ckpt);
  ParseOptions parse;
  parse.grid = cfg.bench.grid;
  const int workers = std::max(1, std::min<int>(thread_cap(), static_cast<int>(suite.size())));
  std::vector<Tensor> images(suite.size());
  std::vector<std::string> errors(suite.size());
  auto work = [&](int w) {
    const auto model = model_from_checkpoint(ckpt);
    for (std::size_t i = static_cast<std::size_t>(w); i < suite.size();
         i += static_cast<std::size_t>(workers)) {
      try {
        images[i] = sample_image(*model, text_prompt(suite[i].tokens), sampler, suite[i].index);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return evaluate(
      [&](const BenchPrompt& p) {
        if (!errors[p.index].empty()) throw std::runtime_error(errors[p.index]);
        return images[p.index];
      },
      suite, parse);
}

}  // namespace

json cmd_train(const TrainArgs& args) {
  std::unique_ptr<Trainer> trainer;
  if (!args.resume.empty()) {
    trainer = Trainer::from_checkpoint(open_checkpoint(args.resume));
  } else {
    if (args.config.empty()) throw CommandError("train needs --config or --resume");
    const RunConfig cfg = load_run_config(args.config);
    fs::create_directories(args.out_dir);
    fs::remove(fs::path(args.out_dir) / "metrics.jsonl");
    trainer = std::make_unique<Trainer>(cfg);
  }
  PipelineOptions opts;
  opts.out_dir = args.out_dir;
  opts.hooks.stop_after = args.stop_after;
  opts.hooks.validate_every = args.validate_every;
  const PipelineResult res = trainer->run(opts);
  return {{"completed", res.completed},
          {"checkpoints", res.checkpoints},
          {"metrics", (fs::path(args.out_dir) / "metrics.jsonl").string()},
          {"global_step", trainer->state().global_step}};
}

Tensor cmd_sample(const SampleArgs& args) {
  const Checkpoint ckpt = open_checkpoint(args.checkpoint);
  const RunConfig cfg = checkpoint_config(ckpt);
  if (args.bridge) {
    const BridgeMode want = bridge_mode_from_string(*args.bridge);
    if (want != cfg.bridge.mode) {
      throw CommandError("--bridge " + *args.bridge + " does not match the checkpoint, which was trained with bridge mode " +
                         to_string(cfg.bridge.mode));
    }
  }
  const TokenIds prompt = Vocabulary::get().tokenize(args.prompt);
  const auto model = model_from_checkpoint(ckpt);
  const Tensor image =
      sample_image(*model, text_prompt(prompt), sampler_for(cfg, args.steps, args.guidance, args.seed));
  write_ppm(args.out, image);
  return image;
}

Tensor cmd_edit(const EditArgs& args) {
  const TokenIds instruction = words(args.instruction, "edit instruction");
  const Checkpoint ckpt = open_checkpoint(args.checkpoint);
  const RunConfig cfg = checkpoint_config(ckpt);
  const Tensor source = read_ppm(args.source);
  const auto side = static_cast<std::size_t>(cfg.mllm.img_side);
  if (source.shape() != Shape{side, side, 3}) {
    throw CommandError("source image " + args.source + " is " + std::to_string(source.dim(1)) + "x" +
                       std::to_string(source.dim(0)) + "; expected " + std::to_string(side) + "x" +
                       std::to_string(side) + " RGB");
  }
  const auto model = model_from_checkpoint(ckpt);
  const Tensor image = sample_image(*model, edit_prompt(instruction, source),
                                    sampler_for(cfg, args.steps, args.guidance, args.seed));
  write_ppm(args.out, image);
  return image;
}

json cmd_eval(const EvalArgs& args) {
  EvalReport report;
  if (args.oracle) {
    const int per = args.per_category.value_or(BenchConfig{}.prompts_per_category);
    const auto suite = build_suite(args.suite_seed, per, args.grid, args.img_side);
    ParseOptions parse;
    parse.grid = args.grid;
    report = evaluate([&](const BenchPrompt& p) { return oracle_image(p, args.grid, args.img_side); },
                      suite, parse);
  } else {
    const Checkpoint ckpt = open_checkpoint(args.checkpoint);
    const RunConfig cfg = checkpoint_config(ckpt);
    const int per = args.per_category.value_or(cfg.bench.prompts_per_category);
    const auto suite = build_suite(args.suite_seed, per, cfg.bench.grid, cfg.dit.img_side);
    report = evaluate_checkpoint(ckpt, suite, sampler_for(cfg, args.steps, std::nullopt, std::nullopt));
  }
  const json j = report.to_json();
  write_json(args.out, j);
  return j;
}

json cmd_ablate(const AblateArgs& args) {
  RunConfig base = load_run_config(args.config);
  if (args.seed) base.seed = *args.seed;
  const int per = args.per_category.value_or(base.bench.prompts_per_category);
  const auto suite = build_suite(base.seed, per, base.bench.grid, base.dit.img_side);

  struct Run {
    std::string name;
    PipelineResult result;
    std::size_t bridge_params = 0;
    CategoryScores scores;
  };
  std::vector<Run> runs;
  for (BridgeMode mode : {BridgeMode::kLadder, BridgeMode::kFinalLayerOnly}) {
    RunConfig cfg = base;
    cfg.bridge.mode = mode;
    Run run;
    run.name = to_string(mode);
    Trainer trainer(cfg);
    PipelineOptions opts;
    opts.out_dir = (fs::path(args.out_dir) / run.name).string();
    fs::create_directories(opts.out_dir);
    fs::remove(fs::path(opts.out_dir) / "metrics.jsonl");
    run.result = trainer.run(opts);
    run.bridge_params = trainer.model().bridge().param_count();
    run.scores = evaluate_checkpoint(trainer.checkpoint(), suite, cfg.sampler).scores;
    runs.push_back(std::move(run));
  }
  if (runs[0].result.batch_digests != runs[1].result.batch_digests) {
    throw CommandError("ablation runs consumed different batch streams");
  }
  if (runs[0].bridge_params != runs[1].bridge_params) {
    throw CommandError("ablation runs have different bridge parameter counts");
  }
  json report;
  report["seed"] = base.seed;
  report["steps"] = runs[0].result.metrics.size();
  report["batch_digests_identical"] = true;
  report["bridge_param_counts_equal"] = true;
  std::uint64_t stream = 0xcbf29ce484222325ULL;
  for (std::uint64_t d : runs[0].result.batch_digests) stream = mix64(stream ^ d);
  report["batch_stream_digest"] = stream;
  for (const auto& r : runs) {
    const auto& m = r.result.metrics;
    report["runs"][r.name] = {{"bridge_param_count", r.bridge_params},
                              {"final_loss", m.empty() ? json(nullptr) : json(m.back().loss)},
                              {"loss_curve", metrics_curve(m)},
                              {"scores", r.scores.to_json()}};
  }
  write_json((fs::path(args.out_dir) / "report.json").string(), report);
  return report;
}

void cmd_gen_data(const GenDataArgs& args) {
  if (args.out_dir.empty()) throw CommandError("gen-data needs --out");
  DatasetKind kind;
  if (args.kind == "t2i") {
    kind = DatasetKind::kT2i;
  } else if (args.kind == "edit") {
    kind = DatasetKind::kEdit;
  } else {
    throw CommandError("--kind must be t2i or edit");
  }
  gen_dataset(args.out_dir, args.n, kind, args.seed, args.grid, args.img_side, args.recolor_only);
}

json cmd_grad_check(const GradCheckArgs& args) {
  RunConfig cfg;
  if (!args.config.empty()) {
    cfg = load_run_config(args.config);
  } else {
    cfg.mllm = {4, 16, 2, 32, cfg.mllm.vocab, 32, 4, 8, 0, 1, 1e-3};
    cfg.dit = {2, 16, 2, 32, 8, 4, 16};
    cfg.bridge.queries = 4;
    cfg.stages = {StageConfig{}};
  }
  cfg.seed = args.seed;
  cfg.mllm.pretrain_steps = 0;
  LadderModel<double> model(cfg);

  // Zero-initialized output layers would make most upstream gradients
  // vanish; perturb every trainable tensor so all paths carry signal.
  Rng rng = Rng(args.seed).stream("grad_check");
  for (auto* p : model.trainable_params()) {
    Rng r = rng.stream(p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += 0.1 * r.normal();
  }
  const auto side = static_cast<std::size_t>(cfg.dit.img_side);
  Rng data = rng.stream("data");
  const SceneSpec scene = random_scene(data, cfg.bench.grid, cfg.mllm.img_side, 2);
  const PromptSequence prompt = edit_prompt(caption(scene), render(scene));
  BasicTensor<double> x0(Shape{side, side, 3});
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = 2 * data.uniform() - 1;
  const FlowSample<double> sample = make_flow_sample(x0, data, 0.37);

  GradCheckOptions opts;
  opts.coords_per_param = args.coords;
  opts.tol = args.tol;
  opts.seed = args.seed;
  const GradCheckReport rep = grad_check<double>(
      [&](Graph<double>& g) { return model.loss(g, prompt, sample); }, model.trainable_params(),
      opts);
  json failures = json::array();
  for (const auto& f : rep.failures) {
    failures.push_back({{"param", f.param}, {"index", f.index}, {"analytic", f.analytic},
                        {"numeric", f.numeric}, {"rel_error", f.rel_error}});
  }
  return {{"passed", rep.passed},
          {"coordinates_checked", rep.coordinates_checked},
          {"tensors", model.trainable_params().size()},
          {"max_rel_error", rep.worst.rel_error},
          {"worst", rep.worst.param + "[" + std::to_string(rep.worst.index) + "]"},
          {"failures", failures}};
}

}  // namespace lddr::cli
