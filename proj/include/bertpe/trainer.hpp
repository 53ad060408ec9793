// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch Adam training with freeze-aware updates, evaluation with
// wall-clock timing, and the F1-per-decade efficiency ratio.

#pragma once

#include <bertpe/model.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bertpe {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 3;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t max_answer_len = kDefaultMaxAnswerLen;

  void validate() const {
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (epochs == 0) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
  }
};

/// Non-finite loss; carries the 1-based step index.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(std::size_t step)
      : std::runtime_error("training diverged: non-finite loss at step " +
                           std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Adam whose moment buffers exist only for trainable parameters.
class Adam {
 public:
  Adam(const ParameterRegistry& reg, const TrainConfig& c) : config_(c) {
    for (const auto& p : reg) {
      if (p.trainable) {
        state_.emplace(p.name, Moments{std::vector<double>(p.count(), 0.0),
                                       std::vector<double>(p.count(), 0.0)});
      }
    }
  }

  /// Number of values held in moment buffers.
  std::size_t state_size() const {
    std::size_t n = 0;
    for (const auto& [_, m] : state_) n += m.first.size() + m.second.size();
    return n;
  }

  void step(ParameterRegistry& reg,
            const std::unordered_map<std::string, std::vector<double>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& [name, g] : grads) {
      Parameter& p = reg.at(name);
      if (!p.trainable) {
        throw std::logic_error("Adam: gradient supplied for frozen " + name);
      }
      auto& [m, v] = state_.at(name);
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        p.values[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.adam_eps);
      }
    }
  }

 private:
  using Moments = std::pair<std::vector<double>, std::vector<double>>;
  TrainConfig config_;
  std::unordered_map<std::string, Moments> state_;
  std::size_t t_ = 0;
};

struct LossRecord {
  std::size_t step = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  double train_seconds = 0.0;
};

/// Forward, backward and one Adam update per call.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& config)
      : model_(&model), config_(config), adam_(model.params, config) {
    config.validate();
  }

  /// Mean span loss of the batch before the update.
  double step(std::span<const SpanExample* const> batch) {
    if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
    ++steps_;
    Tape tape;
    BoundParams bound(tape, model_->params, GradMode::trainable_only);
    std::vector<Var> losses;
    losses.reserve(batch.size());
    for (const SpanExample* ex : batch) {
      losses.push_back(span_loss(model_forward(bound, *model_, *ex), ex->gold));
    }
    Var total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
    Var mean = ops::scale(total, 1.0 / static_cast<double>(batch.size()));
    const double loss = mean.value().data[0];
    if (!std::isfinite(loss)) throw TrainingDiverged(steps_);
    tape.backward(mean);
    std::unordered_map<std::string, std::vector<double>> grads;
    for (const auto& p : model_->params) {
      if (p.trainable) grads.emplace(p.name, tape.grad(bound[p.name]));
    }
    adam_.step(model_->params, grads);
    return loss;
  }

  std::size_t steps() const { return steps_; }
  const Adam& optimizer() const { return adam_; }

 private:
  Model* model_;
  TrainConfig config_;
  Adam adam_;
  std::size_t steps_ = 0;
};

/// Trains for config.epochs, reshuffling the data each epoch from the seed.
inline TrainResult train(Model& model, const std::vector<SpanExample>& data,
                         const TrainConfig& config) {
  config.validate();
  TrainResult result;
  Trainer trainer(model, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const SpanExample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i)
        batch.push_back(&data[order[i]]);
      const double loss = trainer.step(batch);
      result.history.push_back({trainer.steps(), epoch, loss});
    }
  }
  result.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "step,epoch,loss\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%.10g", r.loss);
    out << r.step << ',' << r.epoch << ',' << buf << '\n';
  }
}

struct EvalResult {
  Scores scores;
  double inference_seconds = 0.0;
  std::vector<Span> predictions;
};

/// Scores `logits_of(example) -> pair<start, end>` over a dataset. Only the
/// logit computation and decoding are timed.
template <class LogitFn>
EvalResult evaluate_with(const std::vector<SpanExample>& data,
                         const TrainConfig& config, LogitFn&& logits_of) {
  EvalResult r;
  r.predictions.reserve(data.size());
  std::vector<Span> golds;
  golds.reserve(data.size());
  std::chrono::steady_clock::duration elapsed{};
  for (const auto& ex : data) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [start, end] = logits_of(ex);
    Span s = decode_span(start, end, config.max_answer_len).span;
    elapsed += std::chrono::steady_clock::now() - t0;
    r.predictions.push_back(s);
    golds.push_back(ex.gold);
  }
  r.scores = score(r.predictions, golds);
  r.inference_seconds = std::chrono::duration<double>(elapsed).count();
  return r;
}

/// Forward-only evaluation; parameters are read, never written.
inline EvalResult evaluate(const Model& model, const std::vector<SpanExample>& data,
                           const TrainConfig& config) {
  return evaluate_with(data, config, [&](const SpanExample& ex) {
    Tape tape;
    BoundParams bound(tape, model.params, GradMode::none);
    SpanLogits l = model_forward(bound, model, ex);
    return std::pair{l.start.value().data, l.end.value().data};
  });
}

/// (F1 − 50) / log10(trainable parameters), F1 on the 0–100 scale.
inline double efficiency_ratio(Percent f1, std::uint64_t trainable_count) {
  if (trainable_count < 2) {
    throw std::invalid_argument("efficiency_ratio: need at least 2 trainable parameters");
  }
  return (f1.value() - 50.0) / std::log10(static_cast<double>(trainable_count));
}

// A fraction must be converted to Percent explicitly.
double efficiency_ratio(Fraction, std::uint64_t) = delete;

}  // namespace bertpe
