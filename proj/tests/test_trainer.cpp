// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0

#include <bertpe/trainer.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace {

using namespace bertpe;

std::vector<SpanExample> desk_data(std::size_t count, std::uint64_t seed = 0) {
  DatasetParams p;
  p.seed = seed;
  p.count = count;
  p.needle_min = p.needle_max = 1;
  return generate_dataset(p);
}

Model desk_model(std::size_t k, std::optional<AdapterConfig> adapter = std::nullopt) {
  EncoderConfig c = EncoderConfig::desk();
  c.adapter = adapter;
  Model m = build_model(c, AffineSpanHead{}, 0);
  apply_freeze_policy(m, FreezePolicy{k, k == c.num_layers, true});
  return m;
}

std::vector<const SpanExample*> pointers(const std::vector<SpanExample>& d) {
  std::vector<const SpanExample*> v;
  for (const auto& ex : d) v.push_back(&ex);
  return v;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, StateOnlyForTrainableParameters) {
  Model m = desk_model(1);
  Adam adam(m.params, TrainConfig{});
  EXPECT_EQ(adam.state_size(), 2 * m.params.trainable_count());
  std::unordered_map<std::string, std::vector<double>> g{
      {"layer.0.attention.query.weight", std::vector<double>(32 * 32, 1.0)}};
  EXPECT_THROW(adam.step(m.params, g), std::logic_error);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterRegistry reg;
  reg.add("w", {3}, {1.0, -2.0, 0.5});
  TrainConfig c;
  c.learning_rate = 0.1;
  Adam adam(reg, c);
  adam.step(reg, {{"w", {2.0, -0.5, 0.0}}});
  // Bias-corrected first step is lr·sign(g) up to eps.
  EXPECT_NEAR(reg.at("w").values[0], 0.9, 1e-7);
  EXPECT_NEAR(reg.at("w").values[1], -1.9, 1e-7);
  EXPECT_EQ(reg.at("w").values[2], 0.5);
}

TEST(Trainer, FrozenParametersAreBitIdenticalAfterTraining) {
  const auto data = desk_data(48);
  for (std::size_t k : {0, 1, 2}) {
    Model m = desk_model(k, AdapterConfig{4});
    apply_freeze_policy(m, FreezePolicy{k, false, k != 1});
    const ParameterRegistry before = m.params;
    TrainConfig tc;
    tc.epochs = 2;
    train(m, data, tc);
    std::size_t changed = 0;
    auto it = before.begin();
    for (const auto& p : m.params) {
      if (!p.trainable) {
        EXPECT_EQ(p.values, it->values) << p.name;
      } else {
        changed += p.values != it->values;
      }
      ++it;
    }
    EXPECT_GT(changed, 0u);
  }
}

TEST(Trainer, LossStrictlyDecreasesOnFixedBatch) {
  const auto data = desk_data(8);
  Model m = desk_model(2);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  Trainer t(m, tc);
  const auto batch = pointers(data);
  double prev = t.step(batch);
  for (int i = 1; i < 10; ++i) {
    const double loss = t.step(batch);
    EXPECT_LT(loss, prev) << "step " << i + 1;
    prev = loss;
  }
}

TEST(Trainer, TwoHundredStepsHalveTheLoss) {
  const auto data = desk_data(1600);
  Model m = desk_model(2);
  TrainConfig tc;
  tc.epochs = 1;
  const auto h = train(m, data, tc).history;
  ASSERT_EQ(h.size(), 200u);
  double tail = 0.0;
  for (std::size_t i = 190; i < 200; ++i) tail += h[i].loss / 10.0;
  EXPECT_LE(tail, 0.5 * h.front().loss) << "step 1 loss " << h.front().loss;
}

TEST(Trainer, SameSeedSameHistory) {
  const auto data = desk_data(40);
  TrainConfig tc;
  tc.epochs = 2;
  Model a = desk_model(2), b = desk_model(2);
  const auto ha = train(a, data, tc).history;
  const auto hb = train(b, data, tc).history;
  ASSERT_EQ(ha.size(), hb.size());
  ASSERT_EQ(ha.size(), 10u);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    EXPECT_EQ(ha[i].loss, hb[i].loss);
    EXPECT_EQ(ha[i].step, i + 1);
    EXPECT_EQ(ha[i].epoch, i / 5 + 1);
  }
}

TEST(Trainer, NonFiniteLossRaisesWithStep) {
  const auto data = desk_data(8);
  Model m = desk_model(2);
  m.params.at("head.span.bias").values[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(m, TrainConfig{});
  try {
    t.step(pointers(data));
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(Trainer, LossCsvFormat) {
  std::ostringstream out;
  write_loss_csv(out, {{1, 1, 4.25}, {2, 1, 0.5}});
  EXPECT_EQ(out.str(), "step,epoch,loss\n1,1,4.25\n2,1,0.5\n");
}

TEST(Evaluate, PerfectOracleLogits) {
  const auto data = desk_data(60);
  EvalResult r = evaluate_with(data, TrainConfig{}, [](const SpanExample& ex) {
    std::vector<double> s(ex.length(), 0.0), e(ex.length(), 0.0);
    s[ex.gold.start] = 10.0;
    e[ex.gold.end] = 10.0;
    return std::pair{s, e};
  });
  EXPECT_EQ(r.scores.exact_match.value, 1.0);
  EXPECT_EQ(r.scores.f1.value, 1.0);
  EXPECT_GE(r.inference_seconds, 0.0);
}

TEST(Evaluate, UniformZeroLogitsPredictNull) {
  const auto data = desk_data(90);
  std::size_t nulls = 0;
  for (const auto& ex : data) nulls += ex.gold.is_null();
  EvalResult r = evaluate_with(data, TrainConfig{}, [](const SpanExample& ex) {
    return std::pair{std::vector<double>(ex.length(), 0.0),
                     std::vector<double>(ex.length(), 0.0)};
  });
  for (const auto& p : r.predictions) EXPECT_EQ(p, kNoAnswer);
  EXPECT_DOUBLE_EQ(r.scores.exact_match.value, static_cast<double>(nulls) / 90.0);
}

TEST(Evaluate, DoesNotWriteParameters) {
  const auto data = desk_data(10);
  Model m = desk_model(2);
  const ParameterRegistry before = m.params;
  evaluate(m, data, TrainConfig{});
  auto it = before.begin();
  for (const auto& p : m.params) EXPECT_EQ(p.values, (it++)->values);
}

TEST(Timing, InferenceGrowsWithDatasetSize) {
  Model m = desk_model(2);
  const auto small = desk_data(20, 3);
  auto doubled = small;
  doubled.insert(doubled.end(), small.begin(), small.end());
  // Best of three damps scheduler noise on shared machines.
  auto best = [&](const std::vector<SpanExample>& d) {
    double t = 1e9;
    for (int i = 0; i < 3; ++i) t = std::min(t, evaluate(m, d, TrainConfig{}).inference_seconds);
    return t;
  };
  EXPECT_GT(best(doubled), best(small));
}

TEST(Timing, FrozenTrainsFasterThanFull) {
  // Deep enough that skipped weight gradients dominate the difference.
  const auto data = desk_data(48, 5);
  TrainConfig tc;
  tc.epochs = 1;
  const EncoderConfig c = EncoderConfig::desk(4);
  // Best of three damps scheduler noise on shared machines.
  auto best = [&](bool full) {
    double t = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      Model m = build_model(c, AffineSpanHead{}, rep);
      apply_freeze_policy(m, full ? FreezePolicy::full(c) : FreezePolicy{0, false, true});
      t = std::min(t, train(m, data, tc).train_seconds);
    }
    return t;
  };
  const double frozen = best(false);
  const double full = best(true);
  EXPECT_GT(frozen, 0.0);
  EXPECT_LT(frozen, full);
}

TEST(EfficiencyRatio, Examples) {
  EXPECT_NEAR(efficiency_ratio(Percent(75.2), 42'548'738), 3.30, 0.01);
  EXPECT_NEAR(efficiency_ratio(Percent(76.3), 108'311'810), 3.27, 0.01);
  EXPECT_EQ(efficiency_ratio(Percent(50.0), 39'938), 0.0);
  EXPECT_EQ(efficiency_ratio(Percent(50.0), 7), 0.0);
  EXPECT_THROW(efficiency_ratio(Percent(60.0), 1), std::invalid_argument);
  // Independent evaluation: log10 via natural logs.
  EXPECT_NEAR(efficiency_ratio(Percent(75.2), 42'548'738),
              25.2 * std::log(10.0) / std::log(42'548'738.0), 1e-12);
}

template <class T>
concept RatioAccepts = requires(T f) { efficiency_ratio(f, std::uint64_t{10}); };

TEST(EfficiencyRatio, FractionsMustBeConvertedExplicitly) {
  static_assert(RatioAccepts<Percent>);
  static_assert(!RatioAccepts<Fraction>);
  static_assert(!RatioAccepts<double>);
  EXPECT_NEAR(efficiency_ratio(Percent(Fraction{0.752}), 42'548'738), 3.30, 0.01);
}

}  // namespace
