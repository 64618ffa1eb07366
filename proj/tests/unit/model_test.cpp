// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "lddr/bridge.hpp"
#include "lddr/dit.hpp"
#include "lddr/flow.hpp"
#include "lddr/grad_check.hpp"
#include "lddr/model.hpp"
#include "test_configs.hpp"

namespace lddr {
namespace {

using testing::grad_config;
using testing::tiny_config;

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Tensor scaled_noise(const Shape& shape, Rng& r, float scale) {
  Tensor n = gaussian_noise<float>(shape, r);
  for (auto& v : n.vec()) v *= scale;
  return n;
}

template <typename T>
void perturb(LadderModel<T>& model, std::uint64_t seed, double stddev) {
  Rng r(seed);
  for (auto* p : model.trainable_params()) {
    Rng pr = r.stream(p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += T(stddev * pr.normal());
  }
}

// ---- tap schedule --------------------------------------------------------------

TEST(TapSchedule, PairsLayerIWithLayerMMinusNPlusI) {
  const auto s = tap_schedule(8, 4);
  ASSERT_EQ(s.pairs.size(), 4u);
  EXPECT_EQ(s.pairs[0], (TapPair{1, 5}));
  EXPECT_EQ(s.pairs[3], (TapPair{4, 8}));
  const auto eq = tap_schedule(3, 3);
  EXPECT_EQ(eq.pairs[0], (TapPair{1, 1}));
  const auto one = tap_schedule(5, 1);
  ASSERT_EQ(one.pairs.size(), 1u);
  EXPECT_EQ(one.pairs[0], (TapPair{1, 5}));
}

TEST(TapSchedule, RandomSizesAreContiguousAndEndAtTheTop) {
  Rng r(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + int(r.uniform_int(20));
    const int m = n + int(r.uniform_int(20));
    const auto s = tap_schedule(m, n);
    ASSERT_EQ(int(s.pairs.size()), n);
    for (int i = 1; i < n; ++i) {
      EXPECT_EQ(s.pairs[std::size_t(i)].mllm_layer - s.pairs[std::size_t(i - 1)].mllm_layer, 1);
    }
    EXPECT_EQ(s.pairs.back().mllm_layer, m);
  }
}

TEST(TapSchedule, RejectsShallowMllm) {
  try {
    tap_schedule(2, 4);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("m >= n"), std::string::npos);
  }
  EXPECT_THROW(tap_schedule(3, 0), ConfigError);
}

// ---- mllm ----------------------------------------------------------------------

TEST(Mllm, PrefixStatesIgnoreQueries) {
  RunConfig cfg = tiny_config();
  Rng rng(1);
  ToyMllm<float> mllm(cfg.mllm, rng);
  const auto prompt = text_prompt(Vocabulary::get().tokenize("a red circle"));
  Rng qr(2);
  auto queries = [&](double s) {
    Tensor q({4, 32});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = float(s * qr.normal());
    return q;
  };
  const std::vector<int> taps = {1, 2, 3, 4};
  Graph<float> g1(false), g2(false);
  const auto e1 = mllm.embed_prompt(g1, prompt, g1.constant(queries(1.0)));
  const auto e2 = mllm.embed_prompt(g2, prompt, g2.constant(queries(1.0)));
  EXPECT_TRUE(same_bits(e1.prefix.value(), e2.prefix.value()));
  const auto s1 = mllm.forward_collect(e1, taps);
  const auto s2 = mllm.forward_collect(e2, taps);
  EXPECT_EQ(s1.size(), 4u);
  EXPECT_EQ(s1.at(4).shape(), (Shape{4, 32}));
  EXPECT_FALSE(same_bits(s1.at(4).value(), s2.at(4).value()));
}

TEST(Mllm, EarlierQueriesIgnoreLaterOnes) {
  RunConfig cfg = tiny_config();
  Rng rng(1);
  ToyMllm<float> mllm(cfg.mllm, rng);
  const auto prompt = text_prompt(Vocabulary::get().tokenize("a blue square"));
  Tensor qa({4, 32}), qb;
  Rng qr(3);
  for (std::size_t i = 0; i < qa.size(); ++i) qa[i] = float(qr.normal());
  qb = qa;
  for (std::size_t c = 0; c < 32; ++c) qb[3 * 32 + c] += 1.0f;
  const std::vector<int> taps = {4};
  Graph<float> g(false);
  const auto a = mllm.forward_collect(mllm.embed_prompt(g, prompt, g.constant(qa)), taps).at(4).value();
  const auto b = mllm.forward_collect(mllm.embed_prompt(g, prompt, g.constant(qb)), taps).at(4).value();
  for (std::size_t i = 0; i < 3 * 32; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Mllm, InputValidation) {
  RunConfig cfg = tiny_config();
  Rng rng(1);
  ToyMllm<float> mllm(cfg.mllm, rng);
  Graph<float> g(false);
  const Var<float> q = g.constant(Tensor({4, 32}));
  PromptSequence bad;
  bad.text = {1, 999};
  EXPECT_THROW(mllm.embed_prompt(g, bad, q), VocabularyError);
  PromptSequence long_prompt;
  long_prompt.text.assign(80, 3);
  EXPECT_THROW(mllm.embed_prompt(g, long_prompt, q), DimensionError);
  PromptSequence wrong_image;
  wrong_image.text = {1};
  wrong_image.image = Tensor({8, 8, 3});
  EXPECT_THROW(mllm.embed_prompt(g, wrong_image, q), DimensionError);
  EXPECT_THROW(mllm.embed_prompt(g, text_prompt({}), g.constant(Tensor({4, 16}))), DimensionError);
  const auto emb = mllm.embed_prompt(g, text_prompt({}), q);
  const std::vector<int> unordered = {3, 2};
  const std::vector<int> out_of_range = {5};
  EXPECT_THROW(mllm.forward_collect(emb, unordered), std::exception);
  EXPECT_THROW(mllm.forward_collect(emb, out_of_range), std::exception);
}

TEST(Mllm, ImagePromptsAddPatchRows) {
  RunConfig cfg = tiny_config();
  Rng rng(1);
  ToyMllm<float> mllm(cfg.mllm, rng);
  Graph<float> g(false);
  const auto seq = edit_prompt(Vocabulary::get().tokenize("remove the red circle"),
                               Tensor::filled({16, 16, 3}, 1.0f));
  const auto emb = mllm.embed_prompt(g, seq, g.constant(Tensor({4, 32})));
  EXPECT_EQ(emb.text_rows, 5u);
  EXPECT_EQ(emb.image_rows, 16u);
  EXPECT_EQ(emb.prefix.shape(), (Shape{21, 32}));
  const auto tags = seq.layout(16, 4);
  EXPECT_EQ(tags.front(), TokenTag::kText);
  EXPECT_EQ(tags[5], TokenTag::kImagePatch);
  EXPECT_EQ(tags.back(), TokenTag::kQuery);
}

TEST(Mllm, PretrainingLowersHeldOutLossAndFreezes) {
  RunConfig cfg = tiny_config();
  Rng rng(4);
  ToyMllm<float> mllm(cfg.mllm, rng);
  EXPECT_FALSE(mllm.frozen());
  const auto rep = toy_pretrain(mllm, 60, 8, 3e-3, 5, 2);
  EXPECT_LT(rep.final_heldout_loss, rep.initial_heldout_loss);
  EXPECT_TRUE(mllm.frozen());
  for (auto* p : mllm.params()) EXPECT_FALSE(p->trainable) << p->name;
}

TEST(Mllm, PromptLossMatchesCaptionLossForBosPrompt) {
  RunConfig cfg = tiny_config();
  Rng rng(6);
  ToyMllm<double> mllm(cfg.mllm, rng);
  const auto words = Vocabulary::get().tokenize("a red circle above a blue square");
  Graph<double> g1(false), g2(false);
  const double a = mllm.lm_loss(g1, words, std::nullopt).value()[0];
  const double b = mllm.prompt_lm_loss(g2, text_prompt({}), words).value()[0];
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Mllm, PromptLossAcceptsEmptyTargetAndRejectsEmptyPrompt) {
  RunConfig cfg = tiny_config();
  Rng rng(7);
  ToyMllm<double> mllm(cfg.mllm, rng);
  const auto prompt = edit_prompt(Vocabulary::get().tokenize("make the red circle blue"),
                                  Tensor::filled({16, 16, 3}, 0.0f));
  Graph<double> g1(false), g2(false), g3(false);
  EXPECT_GT(mllm.prompt_lm_loss(g1, prompt, Vocabulary::get().tokenize("a blue circle")).value()[0], 0.0);
  EXPECT_GT(mllm.prompt_lm_loss(g2, prompt, {}).value()[0], 0.0);
  EXPECT_THROW(mllm.prompt_lm_loss(g3, PromptSequence{}, TokenIds{1}), DimensionError);
}

TEST(Mllm, PromptDigestDistinguishesImages) {
  const auto words = Vocabulary::get().tokenize("make the red circle blue");
  const auto a = edit_prompt(words, Tensor::filled({16, 16, 3}, 1.0f));
  const auto b = edit_prompt(words, Tensor::filled({16, 16, 3}, 0.5f));
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(a.digest(), edit_prompt(words, Tensor::filled({16, 16, 3}, 1.0f)).digest());
  EXPECT_NE(text_prompt(words).digest(), a.digest());
}

// ---- bridge --------------------------------------------------------------------

TEST(Bridge, ModesSourceLayersAndParamCounts) {
  RunConfig cfg = tiny_config();
  cfg.mllm.layers = 6;
  cfg.dit.layers = 3;
  std::size_t counts[3];
  for (BridgeMode mode : {BridgeMode::kLadder, BridgeMode::kFinalLayerOnly, BridgeMode::kSharedConnector}) {
    cfg.bridge.mode = mode;
    Rng rng(5);
    LadderBridge<float> bridge(cfg, rng);
    counts[int(mode)] = bridge.param_count();
    const auto layers = bridge.collected_layers();
    if (mode == BridgeMode::kFinalLayerOnly) {
      EXPECT_EQ(layers, std::vector<int>{6});
      for (int i = 1; i <= 3; ++i) EXPECT_EQ(bridge.source_layer(i), 6);
    } else {
      EXPECT_EQ(layers, (std::vector<int>{4, 5, 6}));
      EXPECT_EQ(bridge.source_layer(1), 4);
    }
    const std::size_t per = Connector<float>::param_count(32, 32, 32);
    const std::size_t n_conn = mode == BridgeMode::kSharedConnector ? 1 : 3;
    EXPECT_EQ(bridge.connector_param_count(), per * n_conn);
    EXPECT_EQ(bridge.param_count(), per * n_conn + 4 * 32);
    EXPECT_THROW(bridge.source_layer(0), std::out_of_range);
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_LT(counts[2], counts[0]);
}

TEST(Bridge, ConnectorIsTwoLayerGeluPerceptron) {
  Rng rng(6);
  Connector<double> c("c", 3, 5, 2, rng);
  // Give fc2 nonzero weights so the output is informative.
  Rng wr(7);
  for (auto* p : std::vector<BasicParam<double>*>{&c.fc2.w, &c.fc2.b}) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = wr.normal();
  }
  BasicTensor<double> h({2, 3}, {0.1, -0.4, 0.7, 1.2, 0.0, -0.3});
  Graph<double> g(false);
  const auto out = c(g, g.constant(h)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = c.fc2.b.value[o];
      for (std::size_t j = 0; j < 5; ++j) {
        double z = c.fc1.b.value[j];
        for (std::size_t i = 0; i < 3; ++i) z += h[r * 3 + i] * c.fc1.w.value[i * 5 + j];
        const double gz = 0.5 * z * (1 + std::tanh(std::sqrt(2 / M_PI) * (z + 0.044715 * z * z * z)));
        acc += gz * c.fc2.w.value[j * 2 + o];
      }
      EXPECT_NEAR(out[r * 2 + o], acc, 1e-12);
    }
  }
  EXPECT_THROW(c(g, g.constant(BasicTensor<double>({2, 4}))), DimensionError);
}

TEST(Bridge, StackEntriesComeFromScheduledLayers) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  perturb(model, 3, 0.1);
  Graph<float> g(false);
  const auto seq = text_prompt(Vocabulary::get().tokenize("a green triangle"));
  const auto stack = model.condition(g, seq);
  EXPECT_EQ(stack.source_layers, (std::vector<int>{3, 4}));
  ASSERT_EQ(stack.entries.size(), 2u);
  EXPECT_EQ(stack.entries[0].shape(), (Shape{4, 32}));
  EXPECT_EQ(stack.prompt_digest, seq.digest());

  // Recompute entry 1 from the MLLM layer-3 states directly.
  const auto emb = model.mllm().embed_prompt(g, seq, g.param(model.bridge().queries()));
  const std::vector<int> taps = {3};
  const auto states = model.mllm().forward_collect(emb, taps);
  const auto direct = model.bridge().connectors()[0](g, states.at(3)).value();
  EXPECT_TRUE(same_bits(direct, stack.entries[0].value()));
}

TEST(Bridge, CachedStackBindsToEqualValues) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  perturb(model, 4, 0.1);
  Graph<float> g(false);
  const auto stack = model.condition(g, text_prompt({}));
  const auto cached = CachedStack<float>::from(stack);
  Graph<float> g2(false);
  const auto bound = cached.bind(g2);
  ASSERT_EQ(bound.entries.size(), stack.entries.size());
  for (std::size_t i = 0; i < bound.entries.size(); ++i) {
    EXPECT_TRUE(same_bits(bound.entries[i].value(), stack.entries[i].value()));
  }
  EXPECT_EQ(bound.source_layers, stack.source_layers);
}

// ---- dit -----------------------------------------------------------------------

TEST(Dit, SinusoidalEmbedding) {
  const auto e = sinusoidal_embedding<double>(0.25, 8);
  ASSERT_EQ(e.size(), 8u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(e[std::size_t(i)] * e[std::size_t(i)] + e[std::size_t(i + 4)] * e[std::size_t(i + 4)], 1.0, 1e-12);
  }
  const auto zero = sinusoidal_embedding<double>(0.0, 8);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(zero[std::size_t(i)], 0.0);
    EXPECT_EQ(zero[std::size_t(i + 4)], 1.0);
  }
  EXPECT_NE(sinusoidal_embedding<double>(0.3, 8), sinusoidal_embedding<double>(0.31, 8));
  EXPECT_THROW(sinusoidal_embedding<double>(1.5, 8), std::invalid_argument);
  EXPECT_THROW(sinusoidal_embedding<double>(0.5, 7), std::invalid_argument);
}

TEST(Dit, FreshModelPredictsZeroVelocity) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  Graph<float> g(false);
  Rng r(1);
  const auto x = gaussian_noise<float>({16, 16, 3}, r);
  const auto stack = model.condition(g, text_prompt({}));
  const auto v = model.velocity(g, g.constant(x), 0.5, stack).value();
  EXPECT_EQ(v.shape(), x.shape());
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(v[i], 0.0f);
}

TEST(Dit, CrossAttentionSeesOnlyItsOwnEntry) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  perturb(model, 5, 0.2);
  Graph<float> g(false);
  const auto s1 = model.condition(g, text_prompt(Vocabulary::get().tokenize("a red circle")));
  auto s2 = s1;
  Rng r(2);
  s2.entries[1] = g.constant(gaussian_noise<float>(s1.entries[1].shape(), r));
  Rng tr(3);
  const Var<float> tokens = g.constant(gaussian_noise<float>({16, 32}, tr));
  EXPECT_TRUE(same_bits(model.dit().cross_attention(g, 1, tokens, s1).value(),
                        model.dit().cross_attention(g, 1, tokens, s2).value()));
  EXPECT_FALSE(same_bits(model.dit().cross_attention(g, 2, tokens, s1).value(),
                         model.dit().cross_attention(g, 2, tokens, s2).value()));
}

TEST(Dit, StackLengthMismatchIsAConfigError) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  Graph<float> g(false);
  auto stack = model.condition(g, text_prompt({}));
  stack.entries.pop_back();
  EXPECT_THROW(model.velocity(g, g.constant(Tensor({16, 16, 3})), 0.5, stack), ConfigError);
}

// ---- flow ----------------------------------------------------------------------

TEST(Flow, InterpolantAndTarget) {
  Rng r(8);
  const Tensor x0 = gaussian_noise<float>({4, 4, 3}, r), x1 = gaussian_noise<float>({4, 4, 3}, r);
  const auto s = make_flow_sample(x0, x1, 0.3);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_NEAR(s.x_t[i], 0.7 * x0[i] + 0.3 * x1[i], 1e-6);
    EXPECT_EQ(s.v_target[i], x1[i] - x0[i]);
  }
  EXPECT_TRUE(same_bits(make_flow_sample(x0, x1, 0.0).x_t, x0));
  EXPECT_TRUE(same_bits(make_flow_sample(x0, x1, 1.0).x_t, x1));
  EXPECT_THROW(make_flow_sample(x0, x1, 1.5), std::invalid_argument);
}

TEST(Flow, RandomSampleDrawsNoiseThenTime) {
  const Tensor x0 = Tensor::filled({4, 4, 3}, 0.5f);
  Rng a(9), b(9);
  const auto s = make_flow_sample(x0, a);
  const Tensor noise = gaussian_noise<float>({4, 4, 3}, b);
  EXPECT_TRUE(same_bits(s.x1, noise));
  EXPECT_EQ(s.t, b.uniform());
  Rng c(9);
  EXPECT_EQ(make_flow_sample(x0, c, 0.25).t, 0.25);
}

TEST(Flow, EulerWithExactVelocityRecoversData) {
  Rng r(10);
  const Tensor x0 = scaled_noise({4, 4, 3}, r, 0.3), x1 = gaussian_noise<float>({4, 4, 3}, r);
  Tensor v(x0.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x1[i] - x0[i];
  for (int steps : {1, 7, 50}) {
    const Tensor out = euler_integrate<float>([&](const Tensor&, double) { return v; }, x1, steps, false);
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(out[i], x0[i], 1e-5);
  }
}

TEST(Flow, EulerVisitsTimesFromOneDownAndClamps) {
  std::vector<double> times;
  const Tensor out = euler_integrate<float>(
      [&](const Tensor& x, double t) {
        times.push_back(t);
        return Tensor::filled(x.shape(), -10.0f);
      },
      Tensor({2}), 4);
  EXPECT_EQ(times, (std::vector<double>{1.0, 0.75, 0.5, 0.25}));
  EXPECT_EQ(out[0], 1.0f);
  EXPECT_THROW(euler_integrate<float>([](const Tensor& x, double) { return Tensor::filled(x.shape(), NAN); },
                                      Tensor({2}), 3),
               NonFiniteError);
}

TEST(Flow, GuidanceMixing) {
  const Tensor c({3}, {1.0f, 2.0f, 3.0f}), n({3}, {0.5f, -1.0f, 0.0f});
  EXPECT_TRUE(same_bits(guided_velocity(c, n, 1.0), c));
  EXPECT_TRUE(same_bits(guided_velocity(c, n, 0.0), n));
  const Tensor g = guided_velocity(c, n, 3.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(g[i], n[i] + 3.0f * (c[i] - n[i]));
  EXPECT_THROW(guided_velocity(c, n, -1.0), std::invalid_argument);
}

TEST(Flow, LossIsMeanSquaredVelocityError) {
  Rng r(11);
  const Tensor x0 = gaussian_noise<float>({2, 2, 3}, r), x1 = gaussian_noise<float>({2, 2, 3}, r);
  const auto s = make_flow_sample(x0, x1, 0.4);
  const Tensor pred = gaussian_noise<float>({2, 2, 3}, r);
  Graph<float> g(false);
  double want = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) want += std::pow(pred[i] - (x1[i] - x0[i]), 2);
  EXPECT_NEAR(fm_loss(g.constant(pred), s).value()[0], want / 12, 1e-6);
}

// ---- full model ----------------------------------------------------------------

TEST(Model, EndToEndGradientsMatchFiniteDifferences) {
  RunConfig cfg = grad_config(3);
  LadderModel<double> model(cfg);
  perturb(model, 6, 0.1);
  Rng r(12);
  const SceneSpec scene = random_scene(r, 2, 8, 2);
  const auto prompt = edit_prompt(caption(scene), render(scene));
  BasicTensor<double> x0({8, 8, 3});
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = 2 * r.uniform() - 1;
  const auto sample = make_flow_sample(x0, r, 0.6);
  const auto rep = grad_check<double>([&](Graph<double>& g) { return model.loss(g, prompt, sample); },
                                      model.trainable_params());
  EXPECT_TRUE(rep.passed) << rep.summary();
  EXPECT_GT(rep.coordinates_checked, 500u);
}

TEST(Model, OnlyBridgeAndDitAreTrainable) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  for (auto* p : model.trainable_params()) {
    EXPECT_TRUE(p->trainable);
    EXPECT_TRUE(p->name.rfind("bridge.", 0) == 0 || p->name.rfind("dit.", 0) == 0) << p->name;
  }
  for (auto* p : model.mllm_params()) EXPECT_FALSE(p->trainable) << p->name;
  EXPECT_EQ(model.all_params().size(), model.trainable_params().size() + model.mllm_params().size());
}

TEST(Model, SamplingIsDeterministicAndCacheMatchesRebuild) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  perturb(model, 7, 0.05);
  const auto prompt = text_prompt(Vocabulary::get().tokenize("two blue squares"));
  const SamplerConfig sc{6, 2.0, 11};
  const Tensor a = sample_image(model, prompt, sc, 3);
  EXPECT_TRUE(same_bits(a, sample_image(model, prompt, sc, 3)));
  EXPECT_TRUE(same_bits(a, sample_image(model, prompt, sc, 3, true)));
  EXPECT_FALSE(same_bits(a, sample_image(model, prompt, sc, 4)));
}

TEST(Model, FreshModelOneStepSampleIsClampedNoise) {
  RunConfig cfg = tiny_config();
  cfg.mllm.pretrain_steps = 0;
  LadderModel<float> model(cfg);
  const SamplerConfig sc{1, 1.0, 5};
  const Tensor out = sample_image(model, text_prompt({}), sc, 0);
  const Tensor noise = sampler_noise(model, sc, 0);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::clamp(noise[i], -1.0f, 1.0f));
}

TEST(Model, FloatAndDoubleAgree) {
  RunConfig cfg = grad_config(4);
  LadderModel<float> f(cfg);
  perturb(f, 8, 0.1);
  LadderModel<double> d(cfg);
  d.copy_from(f);
  const auto prompt = text_prompt(Vocabulary::get().tokenize("a red circle"));
  Rng r(13);
  const Tensor x0 = scaled_noise({8, 8, 3}, r, 0.5);
  const auto sf = make_flow_sample(x0, r, 0.5);
  const auto sd = make_flow_sample(BasicTensor<double>::cast_from(sf.x0), BasicTensor<double>::cast_from(sf.x1), 0.5);
  Graph<float> gf(false);
  Graph<double> gd(false);
  EXPECT_NEAR(f.loss(gf, prompt, sf).value()[0], d.loss(gd, prompt, sd).value()[0], 1e-4);
}

}  // namespace
}  // namespace lddr
