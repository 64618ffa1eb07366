// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/config.hpp"

#include <fstream>
#include <set>

#include "lddr/grammar.hpp"

namespace lddr {

using nlohmann::json;

std::string to_string(BridgeMode mode) {
  switch (mode) {
    case BridgeMode::kLadder: return "ladder";
    case BridgeMode::kFinalLayerOnly: return "final_layer_only";
    case BridgeMode::kSharedConnector: return "shared_connector";
  }
  return "ladder";
}

BridgeMode bridge_mode_from_string(const std::string& s) {
  if (s == "ladder") return BridgeMode::kLadder;
  if (s == "final_layer_only") return BridgeMode::kFinalLayerOnly;
  if (s == "shared_connector") return BridgeMode::kSharedConnector;
  throw std::invalid_argument("unknown bridge mode '" + s +
                              "' (expected ladder | final_layer_only | shared_connector)");
}

namespace {

std::string join_lines(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration:";
  for (const auto& p : problems) out += "\n  - " + p;
  return out;
}

/// Reads fields out of one JSON object, collecting problems instead of
/// throwing, and flags keys that were never consumed.
class SectionReader {
 public:
  SectionReader(const json& j, std::string section, std::vector<std::string>& problems)
      : j_(j), section_(std::move(section)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back(section_ + ": expected an object");
  }
  ~SectionReader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) problems_.push_back(section_ + ": unknown key '" + it.key() + "'");
    }
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      problems_.push_back(section_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

 private:
  const json& j_;
  std::string section_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

void read_stage(const json& j, std::size_t i, StageConfig& s, std::vector<std::string>& problems) {
  SectionReader r(j, "stages[" + std::to_string(i) + "]", problems);
  r.get("name", s.name);
  r.get("dataset", s.dataset);
  r.get("batch_size", s.batch_size);
  r.get("steps", s.steps);
  r.get("warmup", s.warmup);
  r.get("lr_max", s.lr_max);
  r.get("lr_min", s.lr_min);
  r.get("edit_fraction", s.edit_fraction);
  r.get("recolor_only", s.recolor_only);
}

int stage_rank(const std::string& name) {
  if (name == "t2i_pretrain") return 0;
  if (name == "ti2i_pretrain") return 1;
  if (name == "finetune") return 2;
  return -1;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_lines(problems)), problems_(std::move(problems)) {}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> p;
  auto positive = [&p](const char* what, double v) {
    if (!(v > 0)) p.push_back(std::string(what) + " must be positive");
  };
  positive("mllm.layers", c.mllm.layers);
  positive("mllm.width", c.mllm.width);
  positive("mllm.heads", c.mllm.heads);
  positive("mllm.mlp_hidden", c.mllm.mlp_hidden);
  positive("mllm.patch", c.mllm.patch);
  positive("mllm.img_side", c.mllm.img_side);
  positive("dit.layers", c.dit.layers);
  positive("dit.width", c.dit.width);
  positive("dit.heads", c.dit.heads);
  positive("dit.mlp_hidden", c.dit.mlp_hidden);
  positive("dit.patch", c.dit.patch);
  positive("dit.img_side", c.dit.img_side);
  positive("dit.t_embed_dim", c.dit.t_embed_dim);
  positive("bridge.queries", c.bridge.queries);
  if (c.mllm.layers > 0 && c.dit.layers > 0 && c.mllm.layers < c.dit.layers) {
    p.push_back("mllm.layers (m=" + std::to_string(c.mllm.layers) + ") < dit.layers (n=" +
                std::to_string(c.dit.layers) + "): the tap schedule requires m >= n");
  }
  if (c.mllm.heads > 0 && c.mllm.width % c.mllm.heads != 0) {
    p.push_back("mllm.width must be divisible by mllm.heads");
  }
  if (c.dit.heads > 0 && c.dit.width % c.dit.heads != 0) {
    p.push_back("dit.width must be divisible by dit.heads");
  }
  if (c.mllm.patch > 0 && c.mllm.img_side % c.mllm.patch != 0) {
    p.push_back("mllm.img_side must be divisible by mllm.patch");
  }
  if (c.dit.patch > 0 && c.dit.img_side % c.dit.patch != 0) {
    p.push_back("dit.img_side must be divisible by dit.patch");
  }
  if (c.mllm.img_side != c.dit.img_side) p.push_back("mllm.img_side must equal dit.img_side");
  if (c.dit.t_embed_dim % 2 != 0) p.push_back("dit.t_embed_dim must be even");
  if (c.mllm.vocab < static_cast<int>(Vocabulary::get().size())) {
    p.push_back("mllm.vocab must be at least the grammar vocabulary size (" +
                std::to_string(Vocabulary::get().size()) + ")");
  }
  if (c.bridge.hidden < 0) p.push_back("bridge.hidden must be >= 0");
  if (c.bridge.query_init_std <= 0) p.push_back("bridge.query_init_std must be positive");
  if (c.mllm.pretrain_steps < 0) p.push_back("mllm.pretrain_steps must be >= 0");
  if (c.mllm.pretrain_batch < 1) p.push_back("mllm.pretrain_batch must be >= 1");
  if (c.flow.cond_dropout < 0 || c.flow.cond_dropout > 1) {
    p.push_back("flow.cond_dropout must be in [0, 1]");
  }
  if (c.bench.grid != 2 && c.bench.grid != 3) p.push_back("bench.grid must be 2 or 3");
  if (c.bench.grid > 0 && c.dit.img_side % c.bench.grid != 0) {
    p.push_back("dit.img_side must be divisible by bench.grid");
  }
  if (c.bench.prompts_per_category < 1) p.push_back("bench.prompts_per_category must be >= 1");
  if (c.sampler.steps < 1) p.push_back("sampler.steps must be >= 1");
  if (c.sampler.guidance_scale < 0) p.push_back("sampler.guidance_scale must be >= 0");
  if (c.guard.window < 1) p.push_back("guard.window must be >= 1");
  if (c.guard.factor <= 1) p.push_back("guard.factor must be > 1");
  if (c.guard.abs_cap <= 0) p.push_back("guard.abs_cap must be positive");
  if (c.checkpoint_every < 0) p.push_back("checkpoint_every must be >= 0");

  // Queries are appended to the longest prompt: instruction + image patches.
  const int longest_prompt = 12 + c.mllm.patches();
  if (c.mllm.max_seq < longest_prompt + c.bridge.queries) {
    p.push_back("mllm.max_seq (" + std::to_string(c.mllm.max_seq) +
                ") too small for the longest prompt plus queries (" +
                std::to_string(longest_prompt + c.bridge.queries) + ")");
  }
  int prev_rank = -1;
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const StageConfig& s = c.stages[i];
    const std::string at = "stages[" + std::to_string(i) + "]";
    const int rank = stage_rank(s.name);
    if (rank < 0) {
      p.push_back(at + ".name '" + s.name + "' is not one of t2i_pretrain | ti2i_pretrain | finetune");
    } else if (rank <= prev_rank) {
      p.push_back(at + ": stages must run in the order t2i_pretrain -> ti2i_pretrain -> finetune");
    }
    prev_rank = std::max(prev_rank, rank);
    if (s.batch_size < 1) p.push_back(at + ".batch_size must be >= 1");
    if (s.steps < 1) p.push_back(at + ".steps must be >= 1");
    if (s.warmup < 0 || s.warmup >= s.steps) p.push_back(at + ".warmup must be in [0, steps)");
    if (!(s.lr_max > 0) || s.lr_min < 0 || s.lr_min > s.lr_max) {
      p.push_back(at + ": need 0 <= lr_min <= lr_max and lr_max > 0");
    }
    if (s.edit_fraction < 0 || s.edit_fraction > 1) p.push_back(at + ".edit_fraction must be in [0, 1]");
  }
  return p;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  {
    SectionReader root(j, "config", problems);
    if (const json* s = root.sub("mllm")) {
      SectionReader r(*s, "mllm", problems);
      r.get("layers", c.mllm.layers);
      r.get("width", c.mllm.width);
      r.get("heads", c.mllm.heads);
      r.get("mlp_hidden", c.mllm.mlp_hidden);
      r.get("vocab", c.mllm.vocab);
      r.get("max_seq", c.mllm.max_seq);
      r.get("patch", c.mllm.patch);
      r.get("img_side", c.mllm.img_side);
      r.get("pretrain_steps", c.mllm.pretrain_steps);
      r.get("pretrain_batch", c.mllm.pretrain_batch);
      r.get("pretrain_lr", c.mllm.pretrain_lr);
    }
    if (const json* s = root.sub("dit")) {
      SectionReader r(*s, "dit", problems);
      r.get("layers", c.dit.layers);
      r.get("width", c.dit.width);
      r.get("heads", c.dit.heads);
      r.get("mlp_hidden", c.dit.mlp_hidden);
      r.get("img_side", c.dit.img_side);
      r.get("patch", c.dit.patch);
      r.get("t_embed_dim", c.dit.t_embed_dim);
    }
    if (const json* s = root.sub("bridge")) {
      SectionReader r(*s, "bridge", problems);
      std::string mode = to_string(c.bridge.mode);
      r.get("mode", mode);
      try {
        c.bridge.mode = bridge_mode_from_string(mode);
      } catch (const std::invalid_argument& e) {
        problems.push_back(std::string("bridge.mode: ") + e.what());
      }
      r.get("queries", c.bridge.queries);
      r.get("hidden", c.bridge.hidden);
      r.get("query_init_std", c.bridge.query_init_std);
    }
    if (const json* s = root.sub("flow")) {
      SectionReader r(*s, "flow", problems);
      r.get("cond_dropout", c.flow.cond_dropout);
    }
    if (const json* s = root.sub("stages")) {
      if (!s->is_array()) {
        problems.push_back("stages: expected an array");
      } else {
        for (std::size_t i = 0; i < s->size(); ++i) {
          StageConfig st;
          read_stage((*s)[i], i, st, problems);
          c.stages.push_back(st);
        }
      }
    }
    if (const json* s = root.sub("optimizer")) {
      SectionReader r(*s, "optimizer", problems);
      r.get("beta1", c.optimizer.beta1);
      r.get("beta2", c.optimizer.beta2);
      r.get("eps", c.optimizer.eps);
      r.get("weight_decay", c.optimizer.weight_decay);
    }
    if (const json* s = root.sub("guard")) {
      SectionReader r(*s, "guard", problems);
      r.get("window", c.guard.window);
      r.get("factor", c.guard.factor);
      r.get("abs_cap", c.guard.abs_cap);
      r.get("warmup_exempt", c.guard.warmup_exempt);
    }
    if (const json* s = root.sub("sampler")) {
      SectionReader r(*s, "sampler", problems);
      r.get("steps", c.sampler.steps);
      r.get("guidance_scale", c.sampler.guidance_scale);
      r.get("seed", c.sampler.seed);
    }
    if (const json* s = root.sub("bench")) {
      SectionReader r(*s, "bench", problems);
      r.get("prompts_per_category", c.bench.prompts_per_category);
      r.get("grid", c.bench.grid);
    }
    root.get("checkpoint_every", c.checkpoint_every);
    root.get("seed", c.seed);
  }
  const auto more = validate(c);
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

json to_json(const RunConfig& c) {
  json stages = json::array();
  for (const StageConfig& s : c.stages) {
    stages.push_back({{"name", s.name},
                      {"dataset", s.dataset},
                      {"batch_size", s.batch_size},
                      {"steps", s.steps},
                      {"warmup", s.warmup},
                      {"lr_max", s.lr_max},
                      {"lr_min", s.lr_min},
                      {"edit_fraction", s.edit_fraction},
                      {"recolor_only", s.recolor_only}});
  }
  return json{
      {"mllm",
       {{"layers", c.mllm.layers},
        {"width", c.mllm.width},
        {"heads", c.mllm.heads},
        {"mlp_hidden", c.mllm.mlp_hidden},
        {"vocab", c.mllm.vocab},
        {"max_seq", c.mllm.max_seq},
        {"patch", c.mllm.patch},
        {"img_side", c.mllm.img_side},
        {"pretrain_steps", c.mllm.pretrain_steps},
        {"pretrain_batch", c.mllm.pretrain_batch},
        {"pretrain_lr", c.mllm.pretrain_lr}}},
      {"dit",
       {{"layers", c.dit.layers},
        {"width", c.dit.width},
        {"heads", c.dit.heads},
        {"mlp_hidden", c.dit.mlp_hidden},
        {"img_side", c.dit.img_side},
        {"patch", c.dit.patch},
        {"t_embed_dim", c.dit.t_embed_dim}}},
      {"bridge",
       {{"mode", to_string(c.bridge.mode)},
        {"queries", c.bridge.queries},
        {"hidden", c.bridge.hidden},
        {"query_init_std", c.bridge.query_init_std}}},
      {"flow", {{"cond_dropout", c.flow.cond_dropout}}},
      {"stages", stages},
      {"optimizer",
       {{"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"weight_decay", c.optimizer.weight_decay}}},
      {"guard",
       {{"window", c.guard.window},
        {"factor", c.guard.factor},
        {"abs_cap", c.guard.abs_cap},
        {"warmup_exempt", c.guard.warmup_exempt}}},
      {"sampler",
       {{"steps", c.sampler.steps},
        {"guidance_scale", c.sampler.guidance_scale},
        {"seed", c.sampler.seed}}},
      {"bench", {{"prompts_per_category", c.bench.prompts_per_category}, {"grid", c.bench.grid}}},
      {"checkpoint_every", c.checkpoint_every},
      {"seed", c.seed}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return run_config_from_json(j);
}

RunConfig desk_config() {
  RunConfig c;
  c.stages = {
      StageConfig{"t2i_pretrain", "synthetic", 32, 150, 5, 1e-4, 1e-5, 0.0, false},
      StageConfig{"ti2i_pretrain", "synthetic", 16, 60, 5, 1e-4, 1e-5, 1.0, false},
      StageConfig{"finetune", "synthetic", 16, 60, 5, 1e-4, 1e-5, 0.5, false},
  };
  return c;
}

}  // namespace lddr
