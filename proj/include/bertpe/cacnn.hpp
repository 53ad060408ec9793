// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Context-aware convolutional heads. A first convolution over the encoder
// output produces feature maps from which a second set of filters is
// synthesized for each example; those per-example filters are convolved
// with the same encoder output.
//
// context_vector: conv -> length reduction -> conv over the context vector
//                 -> cyclic tiling into K filters of [w2×H].
// simplified:     conv -> first K·w2·H values reshaped into K filters.
//
// Synthesized filters are activations, not parameters, and carry no bias.

#pragma once

#include <bertpe/encoder.hpp>
#include <bertpe/ops.hpp>

#include <cstdint>
#include <string>
#include <utility>

namespace bertpe {

enum class CacnnVariant { context_vector, simplified };
enum class LengthReduction { max, sum };

struct CacnnConfig {
  CacnnVariant variant = CacnnVariant::context_vector;
  std::size_t initial_filters = 8;   // n_f
  std::size_t initial_width = 3;     // w1
  std::size_t context_width = 3;     // w_c, context_vector only
  std::size_t context_filters = 4;   // m, context_vector only
  std::size_t sample_filters = 20;   // K, feature maps per example
  std::size_t sample_width = 1;      // w2
  LengthReduction reduction = LengthReduction::max;
  bool stage_relu = false;  // relu after the first convolution

  /// Values needed to synthesize all K filters.
  std::size_t synthesized_size(std::size_t hidden) const {
    return sample_filters * sample_width * hidden;
  }

  /// Checks the construction invariants for hidden size `hidden` and
  /// sequences of length `seq_len`.
  void validate(std::size_t hidden, std::size_t seq_len) const {
    if (initial_filters == 0 || initial_width == 0 || sample_filters == 0 ||
        sample_width == 0) {
      throw ConfigError("CacnnConfig: filter counts and widths must be positive");
    }
    if (variant == CacnnVariant::context_vector) {
      if (context_filters == 0 || context_width == 0 ||
          context_width > initial_filters) {
        throw ConfigError(
            "CacnnConfig: context convolution needs m >= 1 and w_c <= n_f (got m=" +
            std::to_string(context_filters) + ", w_c=" +
            std::to_string(context_width) + ", n_f=" +
            std::to_string(initial_filters) + ")");
      }
    } else if (seq_len * initial_filters < synthesized_size(hidden)) {
      throw ConfigError("CacnnConfig: simplified variant needs L*n_f >= K*w2*H (" +
                        std::to_string(seq_len * initial_filters) + " < " +
                        std::to_string(synthesized_size(hidden)) + ")");
    }
  }

  /// Closed-form count of head parameters, including the final K->2 affine.
  std::uint64_t parameter_count(std::size_t hidden) const {
    std::uint64_t n = initial_filters * (initial_width * hidden + 1);
    if (variant == CacnnVariant::context_vector)
      n += context_filters * (context_width + 1);
    return n + 2 * sample_filters + 2;
  }
};

/// Tape handles for one CACNN head's parameters.
struct CacnnParams {
  Var initial_filters;  // [n_f×w1×H]
  Var initial_bias;     // [n_f]
  Var context_filters;  // [m×w_c×1], context_vector only
  Var context_bias;     // [m], context_vector only
  Var affine_weight;    // [K×2]
  Var affine_bias;      // [2]

  static CacnnParams bind(const BoundParams& p, const CacnnConfig& c) {
    CacnnParams out;
    out.initial_filters = p["head.cacnn.initial.filters"];
    out.initial_bias = p["head.cacnn.initial.bias"];
    if (c.variant == CacnnVariant::context_vector) {
      out.context_filters = p["head.cacnn.context.filters"];
      out.context_bias = p["head.cacnn.context.bias"];
    }
    out.affine_weight = p["head.affine.weight"];
    out.affine_bias = p["head.affine.bias"];
    return out;
  }
};

/// Registers CACNN head parameters. Filters use the encoder's truncated
/// normal init; biases start at zero.
inline void add_cacnn_head(ParameterRegistry& reg, const CacnnConfig& c,
                           std::size_t hidden, std::mt19937_64* rng) {
  auto add = [&](const std::string& name, Shape shape, bool random) {
    std::vector<double> values;
    if (rng) {
      values.assign(numel(shape), 0.0);
      if (random)
        for (double& v : values) v = detail::truncated_normal(*rng, kInitStddev);
    }
    reg.add(name, std::move(shape), std::move(values));
  };
  add("head.cacnn.initial.filters", {c.initial_filters, c.initial_width, hidden}, true);
  add("head.cacnn.initial.bias", {c.initial_filters}, false);
  if (c.variant == CacnnVariant::context_vector) {
    add("head.cacnn.context.filters", {c.context_filters, c.context_width, 1}, true);
    add("head.cacnn.context.bias", {c.context_filters}, false);
  }
  add("head.affine.weight", {c.sample_filters, 2}, true);
  add("head.affine.bias", {2}, false);
}

namespace detail {

inline Var initial_stage(Var x, const CacnnParams& p, const CacnnConfig& c) {
  Var maps = ops::add_row(ops::conv1d(x, p.initial_filters, ops::Padding::same),
                          p.initial_bias);
  return c.stage_relu ? ops::relu(maps) : maps;
}

inline Var apply_synthesized(Var x, Var flat, const CacnnConfig& c) {
  const std::size_t hidden = x.shape()[1];
  Var filters = ops::reshape(flat, {c.sample_filters, c.sample_width, hidden});
  return ops::conv1d(x, filters, ops::Padding::same);
}

}  // namespace detail

/// Figure-1 style head body: x [L×H] -> feature maps [L×K].
inline Var forward_context_vector(Var x, const CacnnParams& p,
                                  const CacnnConfig& c) {
  if (c.variant != CacnnVariant::context_vector) {
    throw ConfigError("forward_context_vector: config is not the context_vector variant");
  }
  const std::size_t hidden = x.shape().at(1);
  c.validate(hidden, x.shape()[0]);
  Var maps = detail::initial_stage(x, p, c);                       // [L×n_f]
  Var context = c.reduction == LengthReduction::max ? ops::max_reduce(maps)
                                                    : ops::sum_reduce(maps);  // [n_f]
  Var signal = ops::reshape(context, {c.initial_filters, 1});
  Var ctx_maps = ops::add_row(
      ops::conv1d(signal, p.context_filters, ops::Padding::valid),
      p.context_bias);                                              // [(n_f-w_c+1)×m]
  Var flat = ops::tile_flat(ctx_maps, c.synthesized_size(hidden));
  return detail::apply_synthesized(x, flat, c);
}

/// Figure-2 style head body: x [L×H] -> feature maps [L×K].
inline Var forward_simplified(Var x, const CacnnParams& p, const CacnnConfig& c) {
  if (c.variant != CacnnVariant::simplified) {
    throw ConfigError("forward_simplified: config is not the simplified variant");
  }
  const std::size_t hidden = x.shape().at(1);
  c.validate(hidden, x.shape()[0]);
  Var maps = detail::initial_stage(x, p, c);  // [L×n_f]
  Var flat = ops::tile_flat(maps, c.synthesized_size(hidden));
  return detail::apply_synthesized(x, flat, c);
}

inline Var cacnn_features(Var x, const CacnnParams& p, const CacnnConfig& c) {
  return c.variant == CacnnVariant::context_vector ? forward_context_vector(x, p, c)
                                                   : forward_simplified(x, p, c);
}

struct SpanLogits {
  Var start;  // [L]
  Var end;    // [L]
};

/// Per-position affine [L×F] -> two logit vectors; column 0 is start, 1 is end.
inline SpanLogits head_logits(Var features, Var weight, Var bias) {
  const std::size_t len = features.shape().at(0);
  Var both = ops::add_row(ops::matmul(features, weight), bias);
  auto cols = ops::split(both, 1, {1, 1});
  return {ops::reshape(cols[0], {len}), ops::reshape(cols[1], {len})};
}

}  // namespace bertpe
