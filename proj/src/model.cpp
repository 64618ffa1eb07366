// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/model.hpp"

#include <string_view>

namespace lddr {

namespace {

RunConfig checked(const RunConfig& cfg) {
  const auto problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

Rng& as_lvalue(Rng&& r) { return r; }

}  // namespace

template <typename T>
LadderModel<T>::LadderModel(const RunConfig& cfg)
    : cfg_(checked(cfg)),
      init_rng_(cfg.seed),
      mllm_(cfg.mllm, as_lvalue(init_rng_.stream("init.mllm"))),
      bridge_(cfg, as_lvalue(init_rng_.stream("init.bridge"))),
      dit_(cfg.dit, as_lvalue(init_rng_.stream("init.dit"))) {
  mllm_.freeze();
}

template <typename T>
std::vector<BasicParam<T>*> LadderModel<T>::all_params() {
  std::vector<BasicParam<T>*> out = mllm_.params();
  for (auto* p : trainable_params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<BasicParam<T>*> LadderModel<T>::trainable_params() {
  std::vector<BasicParam<T>*> out = bridge_.params();
  for (auto* p : dit_.params()) out.push_back(p);
  return out;
}

template <typename T>
Var<T> LadderModel<T>::loss(Graph<T>& g, const PromptSequence& seq, const FlowSample<T>& sample) {
  const ConditionStack<T> stack = condition(g, seq);
  Var<T> x_t = g.constant(sample.x_t);
  return fm_loss(velocity(g, x_t, sample.t, stack), sample);
}

template <typename T>
std::uint64_t param_checksum(const std::vector<BasicParam<T>*>& params) {
  std::uint64_t h = fnv1a64("params");
  for (const auto* p : params) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                                 p->value.size() * sizeof(T)),
                h);
  }
  return h;
}

template class LadderModel<float>;
template class LadderModel<double>;
template std::uint64_t param_checksum(const std::vector<BasicParam<float>*>&);
template std::uint64_t param_checksum(const std::vector<BasicParam<double>*>&);

PromptSequence text_prompt(const TokenIds& words) {
  PromptSequence p;
  p.text.push_back(Vocabulary::kBos);
  p.text.insert(p.text.end(), words.begin(), words.end());
  return p;
}

PromptSequence edit_prompt(const TokenIds& instruction, const Tensor& signed_source) {
  TokenIds text{Vocabulary::kBos};
  text.insert(text.end(), instruction.begin(), instruction.end());
  return PromptSequence::with_signed_image(std::move(text), signed_source);
}

Tensor sampler_noise(const LadderModel<float>& model, const SamplerConfig& sampler,
                     std::uint64_t index) {
  const auto side = static_cast<std::size_t>(model.config().dit.img_side);
  Rng rng = Rng(sampler.seed).stream("sampler.noise", index);
  return gaussian_noise<float>(Shape{side, side, 3}, rng);
}

Tensor sample_image(LadderModel<float>& model, const PromptSequence& prompt,
                    const SamplerConfig& sampler, std::uint64_t index, bool rebuild_each_step) {
  const bool guided = sampler.guidance_scale != 1.0;
  auto build = [&](const PromptSequence& p) {
    Graph<float> g(false);
    return CachedStack<float>::from(model.condition(g, p));
  };
  CachedStack<float> cond = build(prompt);
  CachedStack<float> null;
  if (guided) null = build(text_prompt({}));
  auto predict = [&](const CachedStack<float>& stack, const Tensor& x, double t) {
    Graph<float> g(false);
    return model.velocity(g, g.constant(x), t, stack.bind(g)).value();
  };
  VelocityFn<float> v = [&](const Tensor& x, double t) {
    if (rebuild_each_step) {
      cond = build(prompt);
      if (guided) null = build(text_prompt({}));
    }
    const Tensor vc = predict(cond, x, t);
    if (!guided) return vc;
    return guided_velocity(vc, predict(null, x, t), sampler.guidance_scale);
  };
  return euler_integrate<float>(v, sampler_noise(model, sampler, index), sampler.steps);
}

}  // namespace lddr
