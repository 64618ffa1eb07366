// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "lddr/config.hpp"

namespace {

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target,
                   const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace lddr::cli;
  CLI::App app{"lddr: ladder-side diffusion tuning on synthetic scenes"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run the staged training recipe");
  train_cmd->add_option("--config", train.config, "Run config (JSON)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from");
  train_cmd->add_option("--out", train.out_dir, "Output directory")->capture_default_str();
  train_cmd->add_option("--stop-after", train.stop_after, "Stop after this many global steps");
  train_cmd->add_option("--validate-every", train.validate_every, "Held-out loss interval");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Generate an image from a text prompt");
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint")->required();
  sample_cmd->add_option("--prompt", sample.prompt, "Prompt words")->required();
  optional_flag(sample_cmd, "--steps", sample.steps, "Euler steps");
  optional_flag(sample_cmd, "--guidance", sample.guidance, "Guidance scale");
  optional_flag(sample_cmd, "--seed", sample.seed, "Sampler seed");
  optional_flag(sample_cmd, "--bridge", sample.bridge, "Expected bridge mode");
  sample_cmd->add_option("--out", sample.out, "Output PPM")->capture_default_str();

  EditArgs edit;
  auto* edit_cmd = app.add_subcommand("edit", "Edit a source image by instruction");
  edit_cmd->add_option("--checkpoint", edit.checkpoint, "Checkpoint")->required();
  edit_cmd->add_option("--source", edit.source, "Source PPM")->required();
  edit_cmd->add_option("--instruction", edit.instruction, "Instruction words")->required();
  optional_flag(edit_cmd, "--steps", edit.steps, "Euler steps");
  optional_flag(edit_cmd, "--guidance", edit.guidance, "Guidance scale");
  optional_flag(edit_cmd, "--seed", edit.seed, "Sampler seed");
  edit_cmd->add_option("--out", edit.out, "Output PPM")->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the compositional suite");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint");
  eval_cmd->add_flag("--oracle", eval.oracle, "Score the rendering oracle");
  eval_cmd->add_option("--suite-seed", eval.suite_seed, "Suite seed");
  optional_flag(eval_cmd, "--per-category", eval.per_category, "Prompts per category");
  optional_flag(eval_cmd, "--steps", eval.steps, "Euler steps");
  eval_cmd->add_option("--grid", eval.grid, "Oracle grid")->capture_default_str();
  eval_cmd->add_option("--img-side", eval.img_side, "Oracle image side")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Report path (JSON)");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Twin runs: ladder vs final_layer_only");
  ablate_cmd->add_option("--config", ablate.config, "Run config (JSON)")->required();
  optional_flag(ablate_cmd, "--seed", ablate.seed, "Override the config seed");
  optional_flag(ablate_cmd, "--per-category", ablate.per_category, "Prompts per category");
  ablate_cmd->add_option("--out", ablate.out_dir, "Output directory")->capture_default_str();

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Rows")->capture_default_str();
  gen_cmd->add_option("--kind", gen.kind, "t2i or edit")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--grid", gen.grid, "Grid size")->capture_default_str();
  gen_cmd->add_option("--img-side", gen.img_side, "Image side")->capture_default_str();
  gen_cmd->add_flag("--recolor-only", gen.recolor_only, "Only recolor edits");

  GradCheckArgs grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of the full model");
  grad_cmd->add_option("--config", grad.config, "Run config (JSON)");
  grad_cmd->add_option("--seed", grad.seed, "Seed");
  grad_cmd->add_option("--coords", grad.coords, "Coordinates per tensor")->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol, "Relative tolerance")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto res = cmd_train(train);
      std::cout << res.dump(2) << '\n';
      return res.at("completed").get<bool>() || train.stop_after >= 0 ? 0 : 1;
    }
    if (*sample_cmd) {
      cmd_sample(sample);
      std::cout << sample.out << '\n';
    } else if (*edit_cmd) {
      cmd_edit(edit);
      std::cout << edit.out << '\n';
    } else if (*eval_cmd) {
      if (!eval.oracle && eval.checkpoint.empty()) throw CommandError("eval needs --checkpoint or --oracle");
      const auto report = cmd_eval(eval);
      std::cout << report.at("scores").dump(2) << '\n';
    } else if (*ablate_cmd) {
      const auto report = cmd_ablate(ablate);
      std::cout << "report: " << ablate.out_dir << "/report.json\n";
      for (const auto& [name, run] : report.at("runs").items()) {
        std::cout << name << " final_loss=" << run.at("final_loss") << " overall="
                  << run.at("scores").at("overall") << '\n';
      }
    } else if (*gen_cmd) {
      cmd_gen_data(gen);
      std::cout << gen.out_dir << "/index.jsonl\n";
    } else if (*grad_cmd) {
      const auto report = cmd_grad_check(grad);
      std::cout << report.dump(2) << '\n';
      return report.at("passed").get<bool>() ? 0 : 1;
    }
  } catch (const lddr::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
