// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "commands.hpp"
#include "lddr/bench.hpp"
#include "lddr/checkpoint.hpp"
#include "lddr/image.hpp"
#include "lddr/optim.hpp"
#include "lddr/trainer.hpp"
#include "test_configs.hpp"

namespace lddr {
namespace {

namespace fs = std::filesystem;
using testing::tiny_config;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lddr_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// ---- optimizer ---------------------------------------------------------------

TEST(AdamW, MatchesHandComputedUpdates) {
  Param p("w", Tensor({3}, {0.5f, -1.0f, 2.0f}));
  const std::vector<std::vector<float>> grads = {{0.1f, -0.2f, 0.0f}, {0.3f, 0.1f, -0.5f}, {-0.2f, 0.0f, 0.4f}};
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  AdamW opt;
  std::vector<double> w = {0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = grads[k][i];
    opt.step({&p}, lr);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = grads[k][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, double(k + 1)));
      const double vh = v[i] / (1 - std::pow(b2, double(k + 1)));
      w[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * w[i]);
      EXPECT_NEAR(p.value[i], w[i], 1e-6) << "step " << k << " coord " << i;
    }
  }
  EXPECT_EQ(opt.applied_steps(), 3);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  Param p("w", Tensor({2}, {1.0f, -4.0f}));
  AdamW opt;
  opt.step({&p}, 0.1);
  EXPECT_FLOAT_EQ(p.value[0], 1.0f - 0.1f * 0.01f * 1.0f);
  EXPECT_FLOAT_EQ(p.value[1], -4.0f + 0.1f * 0.01f * 4.0f);
}

TEST(AdamW, FrozenParamsAreNeverTouched) {
  Param frozen("f", Tensor({2}, {1.0f, 2.0f}), false);
  Param live("l", Tensor({2}, {1.0f, 2.0f}));
  frozen.grad.fill(5.0f);
  live.grad.fill(5.0f);
  AdamW opt;
  opt.step({&frozen, &live}, 0.1);
  EXPECT_EQ(frozen.value[0], 1.0f);
  EXPECT_EQ(frozen.value[1], 2.0f);
  EXPECT_NE(live.value[0], 1.0f);
  EXPECT_EQ(opt.moments().count("f"), 0u);
  EXPECT_EQ(opt.moments().count("l"), 1u);
}

// ---- learning-rate schedule ----------------------------------------------------

TEST(LrSchedule, EndpointsAndMidpoint) {
  EXPECT_EQ(lr_at(0, 100, 10, 1e-3, 1e-4), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(5, 100, 10, 1e-3, 1e-4), 5e-4);
  EXPECT_EQ(lr_at(10, 100, 10, 1e-3, 1e-4), 1e-3);
  EXPECT_NEAR(lr_at(55, 100, 10, 1e-3, 1e-4), 5.5e-4, 1e-15);
  EXPECT_NEAR(lr_at(100, 100, 10, 1e-3, 1e-4), 1e-4, 1e-15);
  EXPECT_EQ(lr_at(0, 10, 0, 1e-3, 1e-4), 1e-3);
  EXPECT_NEAR(lr_at(77500, 150000, 5000, 1e-4, 1e-5), 5.5e-5, 1e-15);
}

TEST(LrSchedule, RandomSchedulesAreMonotoneAndBounded) {
  Rng r(21);
  for (int trial = 0; trial < 100; ++trial) {
    const long total = 2 + long(r.uniform_int(500));
    const long warmup = long(r.uniform_int(std::uint64_t(total)));
    const double lr_max = 1e-4 + r.uniform() * 1e-2, lr_min = lr_max * r.uniform();
    double prev = lr_at(0, total, warmup, lr_max, lr_min);
    for (long s = 1; s <= total; ++s) {
      const double cur = lr_at(s, total, warmup, lr_max, lr_min);
      ASSERT_GE(cur, s < warmup ? 0.0 : lr_min - 1e-18);
      ASSERT_LE(cur, lr_max + 1e-18);
      if (s <= warmup) {
        ASSERT_GE(cur, prev);
      } else {
        ASSERT_LE(cur, prev + 1e-18);
      }
      prev = cur;
    }
  }
}

TEST(LrSchedule, RejectsBadArguments) {
  EXPECT_THROW(lr_at(0, 10, 10, 1e-3, 1e-4), std::invalid_argument);
  EXPECT_THROW(lr_at(11, 10, 2, 1e-3, 1e-4), std::invalid_argument);
  EXPECT_THROW(lr_at(-1, 10, 2, 1e-3, 1e-4), std::invalid_argument);
  EXPECT_THROW(lr_at(0, 0, 0, 1e-3, 1e-4), std::invalid_argument);
}

// ---- spike guard ---------------------------------------------------------------

SpikeGuardState guard(int window, int exempt = 0) {
  SpikeGuardState s;
  s.cfg.window = window;
  s.cfg.warmup_exempt = exempt;
  return s;
}

TEST(SpikeGuard, NonFiniteAndAbsoluteCapAlwaysSkip) {
  auto s = guard(4);
  EXPECT_EQ(spike_guard(s, NAN, 1.0), GuardDecision::kSkip);
  EXPECT_EQ(spike_guard(s, 1.0, INFINITY), GuardDecision::kSkip);
  EXPECT_EQ(spike_guard(s, 100.5, 1.0), GuardDecision::kSkip);
  EXPECT_EQ(spike_guard(s, 99.0, 1.0), GuardDecision::kApply);
  EXPECT_EQ(s.skipped, 3);
  EXPECT_EQ(s.seen, 4);
  EXPECT_EQ(s.norms.size(), 1u);
}

TEST(SpikeGuard, RelativeTestNeedsAFullWindow) {
  auto s = guard(3);
  EXPECT_EQ(spike_guard(s, 1.0, 1.0), GuardDecision::kApply);
  EXPECT_EQ(spike_guard(s, 50.0, 1.0), GuardDecision::kApply);
  EXPECT_EQ(spike_guard(s, 1.0, 1.0), GuardDecision::kApply);
  // Window {1, 50, 1}: median 1.
  EXPECT_EQ(spike_guard(s, 3.5, 1.0), GuardDecision::kSkip);
  EXPECT_EQ(spike_guard(s, 2.9, 1.0), GuardDecision::kApply);
  EXPECT_EQ(spike_guard(s, 1.0, 3.5), GuardDecision::kSkip);
  EXPECT_EQ(std::vector<double>(s.norms.begin(), s.norms.end()), (std::vector<double>{50.0, 1.0, 2.9}));
}

TEST(SpikeGuard, WarmupExemptDecisionsSkipOnlyTheRelativeTest) {
  auto s = guard(1, 3);
  EXPECT_EQ(spike_guard(s, 1.0, 1.0), GuardDecision::kApply);
  EXPECT_EQ(spike_guard(s, 10.0, 1.0), GuardDecision::kApply);
  EXPECT_EQ(spike_guard(s, 150.0, 1.0), GuardDecision::kSkip);
  EXPECT_EQ(spike_guard(s, 31.0, 1.0), GuardDecision::kSkip);
}

TEST(SpikeGuard, StateRoundTripsThroughJson) {
  auto s = guard(5);
  for (double v : {1.0, 2.0, double(NAN), 3.0}) spike_guard(s, v, v);
  const auto back = SpikeGuardState::from_json(s.to_json(), s.cfg);
  EXPECT_EQ(back.norms, s.norms);
  EXPECT_EQ(back.losses, s.losses);
  EXPECT_EQ(back.seen, 4);
  EXPECT_EQ(back.skipped, 1);
}

TEST(SpikeGuard, Median) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_EQ(median({7.0}), 7.0);
}

TEST(Metrics, NonFiniteValuesSerializeAsNull) {
  MetricsRecord r;
  r.step = 3;
  r.stage = "t2i_pretrain";
  r.loss = NAN;
  r.grad_norm = INFINITY;
  r.skipped = true;
  const auto j = r.to_json();
  EXPECT_TRUE(j["loss"].is_null());
  EXPECT_TRUE(j["grad_norm"].is_null());
  EXPECT_FALSE(j.contains("val_loss"));
  r.val_loss = 0.5;
  EXPECT_EQ(r.to_json()["val_loss"], 0.5);
}

// ---- data and trainer -----------------------------------------------------------

TEST(StageData, BatchesDependOnlyOnStepIndex) {
  const RunConfig cfg = tiny_config(3);
  const StageData a(cfg, 1), b(cfg, 1);
  EXPECT_EQ(a.batch(7).digest, b.batch(7).digest);
  EXPECT_NE(a.batch(7).digest, a.batch(8).digest);
  EXPECT_NE(a.batch(7).digest, StageData(cfg, 0).batch(7).digest);
  EXPECT_EQ(a.batch(2).examples.size(), 4u);
  const auto val = a.validation(5);
  ASSERT_EQ(val.size(), 5u);
  for (const auto& e : val) EXPECT_FALSE(e.dropped);
}

TEST(StageData, EditStagesCarrySourceImages) {
  const RunConfig cfg = tiny_config(3);
  for (const auto& e : StageData(cfg, 1).batch(0).examples) {
    if (!e.dropped) EXPECT_TRUE(e.prompt.image.has_value());
  }
  for (const auto& e : StageData(cfg, 0).batch(0).examples) EXPECT_FALSE(e.prompt.image.has_value());
}

TEST(Trainer, StepAdvancesCountersAndRecordsLr) {
  RunConfig cfg = tiny_config(4);
  Trainer t(cfg);
  const StageData data(cfg, 0);
  const auto r1 = t.train_step(data.batch(0));
  EXPECT_EQ(r1.step, 1);
  EXPECT_EQ(r1.stage, "t2i_pretrain");
  EXPECT_DOUBLE_EQ(r1.lr, lr_at(1, 20, 2, 1e-3, 1e-4));
  EXPECT_FALSE(r1.skipped);
  EXPECT_EQ(t.state().step_in_stage, 1);
  EXPECT_EQ(t.optimizer().applied_steps(), 1);
}

TEST(Trainer, CheckpointRestoresExactState) {
  RunConfig cfg = tiny_config(5);
  Trainer t(cfg);
  const StageData data(cfg, 0);
  for (long k = 0; k < 3; ++k) t.train_step(data.batch(k));
  const auto bytes = encode_checkpoint(t.checkpoint());
  auto resumed = Trainer::from_checkpoint(decode_checkpoint(bytes));
  EXPECT_EQ(encode_checkpoint(resumed->checkpoint()), bytes);
  const auto a = t.train_step(data.batch(3));
  const auto b = resumed->train_step(data.batch(3));
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(encode_checkpoint(t.checkpoint()), encode_checkpoint(resumed->checkpoint()));
}

TEST(Trainer, GuardWindowRestartsEachStage) {
  RunConfig cfg = tiny_config(9);
  cfg.guard.window = 3;
  cfg.guard.factor = 1.01;
  Trainer t(cfg);
  const auto res = t.run({});
  ASSERT_EQ(res.metrics.size(), 40u);
  long begin = 0;
  for (const auto& s : cfg.stages) {
    for (long k = 0; k < 3; ++k) EXPECT_FALSE(res.metrics[std::size_t(begin + k)].skipped) << s.name << " " << k;
    begin += s.steps;
  }
  EXPECT_TRUE(t.state().guard.norms.empty());
  EXPECT_EQ(t.state().guard.seen, 0);
}

TEST(Trainer, MllmIsPretrainedAndFrozen) {
  Trainer t(tiny_config(6));
  EXPECT_EQ(t.pretrain_report().steps, 10);
  EXPECT_TRUE(t.model().mllm().frozen());
}

// ---- checkpoint format -----------------------------------------------------------

std::uint32_t bitwise_crc32(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

TEST(Checkpoint, CrcMatchesBitwiseReference) {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> v(check.begin(), check.end());
  EXPECT_EQ(crc32_of(v), 0xCBF43926u);
  Rng r(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> bytes(r.uniform_int(300));
    for (auto& b : bytes) b = std::uint8_t(r.uniform_int(256));
    EXPECT_EQ(crc32_of(bytes), bitwise_crc32(bytes));
  }
}

TEST(Checkpoint, ByteLayout) {
  Checkpoint c;
  c.config_json = "{}";
  c.tensors.push_back({"ab", Tensor({2}, {1.0f, -2.5f})});
  const auto b = encode_checkpoint(c);
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 2 + 4 + 2 + 2 + 1 + 1 + 4 + 8 + 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "LDDR");
  EXPECT_EQ(read_u32(b, 4), kCheckpointVersion);
  EXPECT_EQ(read_u32(b, 8), 2u);
  EXPECT_EQ(b[12], '{');
  EXPECT_EQ(read_u32(b, 14), 1u);
  EXPECT_EQ(b[18], 2);
  EXPECT_EQ(b[19], 0);
  EXPECT_EQ(b[20], 'a');
  EXPECT_EQ(b[22], kDtypeF32);
  EXPECT_EQ(b[23], 1);
  EXPECT_EQ(read_u32(b, 24), 2u);
  float f;
  std::memcpy(&f, &b[32], 4);
  EXPECT_EQ(f, -2.5f);
  const std::vector<std::uint8_t> body(b.begin(), b.end() - 4);
  EXPECT_EQ(read_u32(b, b.size() - 4), bitwise_crc32(body));
  const auto back = decode_checkpoint(b);
  EXPECT_EQ(back.config_json, "{}");
  EXPECT_TRUE(same_bits(back.at("ab"), c.tensors[0].value));
  EXPECT_EQ(back.find("zz"), nullptr);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint c;
  c.config_json = "{\"a\":1}";
  c.tensors.push_back({"w", Tensor({2, 2}, {1, 2, 3, 4})});
  const auto good = encode_checkpoint(c);
  for (std::size_t cut : {0ul, 3ul, 10ul, good.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(std::span(good.data(), cut)), CheckpointError) << cut;
  }
  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), CheckpointError);
  auto version = good;
  version[4] = 9;
  const std::uint32_t crc = bitwise_crc32(std::vector<std::uint8_t>(version.begin(), version.end() - 4));
  for (int k = 0; k < 4; ++k) version[version.size() - 4 + std::size_t(k)] = std::uint8_t(crc >> (8 * k));
  try {
    decode_checkpoint(version);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), CheckpointError);
}

// ---- benchmark --------------------------------------------------------------------

BenchPrompt prompt_for(Category c, std::vector<SceneObject> objs) {
  BenchPrompt p;
  p.category = c;
  p.spec.objects = std::move(objs);
  return p;
}

ParseResult parsed(std::vector<SceneObject> objs) {
  ParseResult r;
  r.ok = true;
  r.spec.objects = std::move(objs);
  return r;
}

constexpr auto kC = ShapeKind::kCircle;
constexpr auto kS = ShapeKind::kSquare;
constexpr auto kT = ShapeKind::kTriangle;
constexpr auto kR = Color::kRed;
constexpr auto kB = Color::kBlue;

TEST(Bench, ScoringRules) {
  const auto single = prompt_for(Category::kSingleObject, {{kC, kR, 0}});
  EXPECT_TRUE(score_prompt(single, parsed({{kC, kB, 3}})));
  EXPECT_FALSE(score_prompt(single, parsed({{kS, kR, 0}})));
  EXPECT_FALSE(score_prompt(single, parsed({{kC, kR, 0}, {kC, kR, 1}})));
  ParseResult failed = parsed({{kC, kR, 0}});
  failed.ok = false;
  EXPECT_FALSE(score_prompt(single, failed));

  const auto colors = prompt_for(Category::kColors, {{kC, kR, 0}});
  EXPECT_FALSE(score_prompt(colors, parsed({{kC, kB, 0}})));
  EXPECT_TRUE(score_prompt(colors, parsed({{kC, kR, 2}})));

  const auto two = prompt_for(Category::kTwoObject, {{kC, kR, 0}, {kT, kB, 1}});
  EXPECT_TRUE(score_prompt(two, parsed({{kT, kR, 0}, {kC, kR, 3}})));
  EXPECT_FALSE(score_prompt(two, parsed({{kT, kR, 0}, {kT, kR, 3}})));

  const auto count = prompt_for(Category::kCounting, {{kS, kR, 0}, {kS, kR, 1}, {kS, kR, 2}});
  EXPECT_TRUE(score_prompt(count, parsed({{kS, kB, 0}, {kS, kB, 1}, {kS, kR, 3}})));
  EXPECT_FALSE(score_prompt(count, parsed({{kS, kB, 0}, {kS, kB, 1}})));
  EXPECT_FALSE(score_prompt(count, parsed({{kS, kB, 0}, {kS, kB, 1}, {kC, kR, 3}})));

  // "a circle above a square": circle in row 0, square in row 1.
  const auto pos = prompt_for(Category::kPosition, {{kC, kR, 0}, {kS, kB, 2}});
  EXPECT_TRUE(score_prompt(pos, parsed({{kC, kB, 1}, {kS, kR, 2}})));
  EXPECT_FALSE(score_prompt(pos, parsed({{kS, kB, 1}, {kC, kR, 2}})));
  EXPECT_FALSE(score_prompt(pos, parsed({{kC, kB, 0}, {kS, kR, 1}})));
  const auto left = prompt_for(Category::kPosition, {{kC, kR, 0}, {kS, kB, 1}});
  EXPECT_TRUE(score_prompt(left, parsed({{kC, kB, 2}, {kS, kR, 3}})));
  EXPECT_FALSE(score_prompt(left, parsed({{kS, kB, 2}, {kC, kR, 3}})));

  const auto bind = prompt_for(Category::kAttributeBinding, {{kC, kR, 0}, {kS, kB, 1}});
  EXPECT_TRUE(score_prompt(bind, parsed({{kS, kB, 2}, {kC, kR, 3}})));
  EXPECT_FALSE(score_prompt(bind, parsed({{kC, kB, 2}, {kS, kR, 3}})));
}

TEST(Bench, OverallIsUnweightedMean) {
  const auto s = CategoryScores::from({0.99, 0.94, 0.77, 0.92, 0.83, 0.75});
  EXPECT_NEAR(s.overall, 0.8667, 5e-5);
  EXPECT_EQ(std::round(s.overall * 100) / 100, 0.87);
  EXPECT_EQ(s[Category::kCounting], 0.77);
  const auto j = s.to_json();
  EXPECT_EQ(j.size(), 7u);
}

TEST(Bench, SuiteIsDeterministicAndBalanced) {
  const auto a = build_suite(9, 5, 2, 16), b = build_suite(9, 5, 2, 16);
  ASSERT_EQ(a.size(), 30u);
  std::array<int, 6> counts{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_EQ(a[i].index, i);
    ++counts[std::size_t(a[i].category)];
    EXPECT_NO_THROW(a[i].spec.validate());
  }
  for (int c : counts) EXPECT_EQ(c, 5);
  EXPECT_NE(build_suite(10, 5, 2, 16)[0].tokens.size() + build_suite(10, 5, 2, 16)[7].tokens.size(), 0u);
}

TEST(Bench, EvaluateAggregatesAndRecordsFailures) {
  const auto suite = build_suite(3, 4, 2, 16);
  const auto oracle = evaluate([](const BenchPrompt& p) { return oracle_image(p, 2, 16); }, suite);
  EXPECT_EQ(oracle.scores.overall, 1.0);
  const auto blank = evaluate([](const BenchPrompt&) { return Tensor::filled({16, 16, 3}, 1.0f); }, suite);
  EXPECT_EQ(blank.scores.overall, 0.0);
  const auto broken = evaluate(
      [](const BenchPrompt& p) -> Tensor {
        if (p.category == Category::kCounting) throw std::runtime_error("boom");
        return oracle_image(p, 2, 16);
      },
      suite);
  EXPECT_EQ(broken.scores[Category::kCounting], 0.0);
  EXPECT_EQ(broken.scores[Category::kColors], 1.0);
  bool saw = false;
  for (const auto& r : broken.records) {
    if (r.prompt.category == Category::kCounting) {
      saw = true;
      EXPECT_NE(r.parsed.reason.find("boom"), std::string::npos);
    }
  }
  EXPECT_TRUE(saw);
  EXPECT_EQ(broken.to_json()["per_prompt"].size(), suite.size());
}

TEST(Datasets, RowsDependOnlyOnIndexAndEditsVerify) {
  const auto dir = scratch("datasets");
  gen_dataset((dir / "a").string(), 6, DatasetKind::kEdit, 11, 2, 16);
  gen_dataset((dir / "b").string(), 3, DatasetKind::kEdit, 11, 2, 16);
  const auto a = load_dataset((dir / "a" / "index.jsonl").string());
  const auto b = load_dataset((dir / "b" / "index.jsonl").string());
  ASSERT_EQ(a.size(), 6u);
  ASSERT_EQ(b.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_TRUE(same_bits(a[i].image, b[i].image));
  }
  for (const auto& row : a) EXPECT_TRUE(verify_edit_row(row, 2));
  auto tampered = a[0];
  tampered.image = tampered.source;
  EXPECT_FALSE(verify_edit_row(tampered, 2));

  gen_dataset((dir / "t").string(), 4, DatasetKind::kT2i, 11, 2, 16);
  const auto t = load_dataset((dir / "t" / "index.jsonl").string());
  ASSERT_EQ(t.size(), 4u);
  for (const auto& row : t) {
    EXPECT_EQ(row.kind, DatasetKind::kT2i);
    EXPECT_EQ(row.source.size(), 0u);
    const auto p = parse_image(row.image);
    ASSERT_TRUE(p.ok);
    EXPECT_EQ(caption(p.spec), row.tokens);
  }
  EXPECT_THROW(load_dataset((dir / "missing.jsonl").string()), std::exception);
}

// ---- commands ----------------------------------------------------------------------

class ScopedEnv {
 public:
  ScopedEnv(const char* key, const char* value) : key_(key) {
    if (const char* old = std::getenv(key)) old_ = old;
    if (value) {
      setenv(key, value, 1);
    } else {
      unsetenv(key);
    }
  }
  ~ScopedEnv() {
    if (old_) {
      setenv(key_, old_->c_str(), 1);
    } else {
      unsetenv(key_);
    }
  }

 private:
  const char* key_;
  std::optional<std::string> old_;
};

TEST(Commands, ThreadCapParsing) {
  {
    ScopedEnv e("LDDR_THREADS", nullptr);
    EXPECT_EQ(cli::thread_cap(), 1);
  }
  {
    ScopedEnv e("LDDR_THREADS", "3");
    EXPECT_EQ(cli::thread_cap(), 3);
  }
  {
    ScopedEnv e("LDDR_THREADS", "100000");
    EXPECT_EQ(cli::thread_cap(), 256);
  }
  for (const char* bad : {"0", "-2", "two", "4x"}) {
    ScopedEnv e("LDDR_THREADS", bad);
    EXPECT_THROW(cli::thread_cap(), cli::CommandError) << bad;
  }
}

class CommandsWithCheckpoint : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("commands"));
    RunConfig cfg = tiny_config(8);
    for (auto& s : cfg.stages) s.steps = 4;
    std::ofstream(*dir_ / "cfg.json") << to_json(cfg).dump();
    cli::TrainArgs args;
    args.config = (*dir_ / "cfg.json").string();
    args.out_dir = (*dir_ / "run").string();
    const auto out = cli::cmd_train(args);
    ckpt_ = new std::string(out["checkpoints"].back().get<std::string>());
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete ckpt_;
  }
  static fs::path* dir_;
  static std::string* ckpt_;
};

fs::path* CommandsWithCheckpoint::dir_ = nullptr;
std::string* CommandsWithCheckpoint::ckpt_ = nullptr;

TEST_F(CommandsWithCheckpoint, TrainWritesEveryStageAndMetrics) {
  const auto lines = [&] {
    std::ifstream in(*dir_ / "run" / "metrics.jsonl");
    int n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
  }();
  EXPECT_EQ(lines, 12);
  EXPECT_TRUE(fs::exists(*ckpt_));
}

TEST_F(CommandsWithCheckpoint, EvalIsIndependentOfThreadCount) {
  cli::EvalArgs args;
  args.checkpoint = *ckpt_;
  args.suite_seed = 4;
  args.per_category = 2;
  args.steps = 2;
  nlohmann::json one, two;
  {
    ScopedEnv e("LDDR_THREADS", "1");
    one = cli::cmd_eval(args);
  }
  {
    ScopedEnv e("LDDR_THREADS", "2");
    two = cli::cmd_eval(args);
  }
  EXPECT_EQ(one.dump(), two.dump());
  EXPECT_EQ(one["per_prompt"].size(), 12u);
}

TEST_F(CommandsWithCheckpoint, SampleIsDeterministicAndValidatesInput) {
  cli::SampleArgs args;
  args.checkpoint = *ckpt_;
  args.prompt = "a red circle";
  args.steps = 3;
  args.out = (*dir_ / "s.ppm").string();
  const Tensor a = cli::cmd_sample(args);
  EXPECT_TRUE(same_bits(a, cli::cmd_sample(args)));
  EXPECT_TRUE(fs::exists(args.out));
  args.prompt = "a red dodecahedron";
  EXPECT_THROW(cli::cmd_sample(args), VocabularyError);
  args.prompt = "a red circle";
  args.bridge = "shared_connector";
  try {
    cli::cmd_sample(args);
    FAIL();
  } catch (const cli::CommandError& e) {
    EXPECT_NE(std::string(e.what()).find("ladder"), std::string::npos) << e.what();
  }
}

TEST_F(CommandsWithCheckpoint, EditValidatesInput) {
  SceneSpec s;
  s.objects = {{kC, kR, 0}};
  write_ppm((*dir_ / "src.ppm").string(), render(s));
  write_ppm((*dir_ / "small.ppm").string(), Tensor({8, 8, 3}));
  cli::EditArgs args;
  args.checkpoint = *ckpt_;
  args.source = (*dir_ / "src.ppm").string();
  args.instruction = "make the red circle blue";
  args.steps = 2;
  args.out = (*dir_ / "e.ppm").string();
  EXPECT_EQ(cli::cmd_edit(args).shape(), (Shape{16, 16, 3}));
  args.instruction = "  ";
  EXPECT_THROW(cli::cmd_edit(args), cli::CommandError);
  args.instruction = "make the red circle blue";
  args.source = (*dir_ / "small.ppm").string();
  EXPECT_THROW(cli::cmd_edit(args), cli::CommandError);
}

TEST(Commands, TrainNeedsAConfig) {
  EXPECT_THROW(cli::cmd_train(cli::TrainArgs{}), cli::CommandError);
}

TEST(Commands, OracleEvalScoresPerfectly) {
  cli::EvalArgs args;
  args.oracle = true;
  args.suite_seed = 2;
  args.per_category = 3;
  const auto j = cli::cmd_eval(args);
  EXPECT_EQ(j["scores"]["overall"], 1.0);
}

}  // namespace
}  // namespace lddr
