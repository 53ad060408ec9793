// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// The standard finite-difference suite: every tape op plus the full
// encoder + adapter + head composites.

#pragma once

#include <bertpe/gradcheck.hpp>
#include <bertpe/model.hpp>

#include <unordered_map>
#include <vector>

namespace bertpe {

/// Tiny model used by the composite checks.
inline EncoderConfig gradcheck_encoder() {
  EncoderConfig c;
  c.vocab_size = 8;
  c.hidden_size = 4;
  c.num_layers = 2;
  c.num_heads = 2;
  c.intermediate_size = 8;
  c.max_seq_len = 8;
  c.adapter = AdapterConfig{2, 0.5};
  return c;
}

namespace detail {

inline GradCheckCase composite_case(std::string name, HeadConfig head) {
  const EncoderConfig enc = gradcheck_encoder();
  const Model layout = build_model_layout(enc, head);
  std::vector<std::string> names;
  GradCheckCase c;
  c.name = std::move(name);
  for (const auto& p : layout.params) {
    names.push_back(p.name);
    c.inputs.push_back(p.shape);
  }
  const std::vector<std::size_t> tokens{0, 3, 1, 5, 3, 7};
  const std::vector<std::size_t> segments{0, 0, 0, 1, 1, 1};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};
  c.build = [=](Tape& tape, std::span<const Var> in) {
    std::unordered_map<std::string, Var> vars;
    for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], in[i]);
    BoundParams p(tape, std::move(vars));
    SpanLogits l = model_forward(p, enc, head, tokens, segments, mask);
    Var loss = span_loss(l, Span{3, 4});
    return ops::concat({loss, l.start, l.end}, 0);
  };
  return c;
}

}  // namespace detail

inline std::vector<GradCheckCase> standard_gradcheck_suite() {
  using namespace ops;
  std::vector<GradCheckCase> s;
  auto add_case = [&](std::string name, std::vector<Shape> shapes,
                      GradCheckCase::Build build,
                      GradCheckCase::MakeInput make = {}) {
    s.push_back({std::move(name), std::move(shapes), std::move(build), std::move(make)});
  };
  add_case("matmul", {{3, 4}, {4, 2}},
           [](Tape&, std::span<const Var> x) { return matmul(x[0], x[1]); });
  add_case("add", {{2, 3}, {2, 3}},
           [](Tape&, std::span<const Var> x) { return add(x[0], x[1]); });
  add_case("add_row", {{3, 4}, {4}},
           [](Tape&, std::span<const Var> x) { return add_row(x[0], x[1]); });
  add_case("mul", {{2, 3}, {2, 3}},
           [](Tape&, std::span<const Var> x) { return mul(x[0], x[1]); });
  add_case("scale", {{5}}, [](Tape&, std::span<const Var> x) { return scale(x[0], -2.5); });
  add_case("gelu", {{2, 5}}, [](Tape&, std::span<const Var> x) { return gelu(x[0]); });
  add_case("relu", {{2, 5}}, [](Tape&, std::span<const Var> x) { return relu(x[0]); },
           away_from_zero_grid);
  add_case("tanh", {{2, 5}}, [](Tape&, std::span<const Var> x) { return ops::tanh(x[0]); });
  add_case("reshape", {{2, 6}},
           [](Tape&, std::span<const Var> x) { return reshape(x[0], {3, 4}); });
  add_case("transpose", {{2, 5}},
           [](Tape&, std::span<const Var> x) { return transpose(x[0]); });
  add_case("concat_axis0", {{2, 3}, {1, 3}},
           [](Tape&, std::span<const Var> x) { return concat({x[0], x[1]}, 0); });
  add_case("concat_axis1", {{2, 3}, {2, 2}},
           [](Tape&, std::span<const Var> x) { return concat({x[0], x[1]}, 1); });
  add_case("split", {{3, 5}}, [](Tape&, std::span<const Var> x) {
    auto parts = split(x[0], 1, {2, 3});
    return concat({scale(parts[0], 3.0), parts[1]}, 1);
  });
  add_case("embedding_lookup", {{5, 3}}, [](Tape&, std::span<const Var> x) {
    return embedding_lookup(x[0], {4, 0, 4, 2});
  });
  add_case("softmax_axis1", {{2, 5}},
           [](Tape&, std::span<const Var> x) { return softmax(x[0], 1); });
  add_case("softmax_axis0", {{3, 4}},
           [](Tape&, std::span<const Var> x) { return softmax(x[0], 0); });
  add_case("layer_norm", {{3, 8}, {8}, {8}}, [](Tape&, std::span<const Var> x) {
    return layer_norm(x[0], x[1], x[2], 1e-12);
  });
  add_case("conv1d_same", {{7, 3}, {2, 3, 3}}, [](Tape&, std::span<const Var> x) {
    return conv1d(x[0], x[1], Padding::same);
  });
  add_case("conv1d_same_even", {{6, 2}, {3, 4, 2}}, [](Tape&, std::span<const Var> x) {
    return conv1d(x[0], x[1], Padding::same);
  });
  add_case("conv1d_valid", {{7, 3}, {2, 3, 3}}, [](Tape&, std::span<const Var> x) {
    return conv1d(x[0], x[1], Padding::valid);
  });
  add_case("max_reduce", {{4, 3}}, [](Tape&, std::span<const Var> x) { return max_reduce(x[0]); },
           distinct_grid);
  add_case("sum_reduce", {{4, 3}},
           [](Tape&, std::span<const Var> x) { return sum_reduce(x[0]); });
  add_case("sum", {{2, 3}}, [](Tape&, std::span<const Var> x) { return sum(x[0]); });
  add_case("tile_flat", {{2, 2}},
           [](Tape&, std::span<const Var> x) { return tile_flat(x[0], 11); });
  add_case("cross_entropy_from_logits", {{6}}, [](Tape&, std::span<const Var> x) {
    return cross_entropy_from_logits(x[0], 2);
  });

  CacnnConfig ctx;
  ctx.variant = CacnnVariant::context_vector;
  ctx.initial_filters = 3;
  ctx.initial_width = 2;
  ctx.context_width = 2;
  ctx.context_filters = 2;
  ctx.sample_filters = 2;
  ctx.sample_width = 2;
  CacnnConfig simple;
  simple.variant = CacnnVariant::simplified;
  simple.initial_filters = 2;
  simple.initial_width = 3;
  simple.sample_filters = 2;
  simple.sample_width = 1;

  s.push_back(bertpe::detail::composite_case("encoder_adapter_span", AffineSpanHead{}));
  s.push_back(bertpe::detail::composite_case("encoder_adapter_cacnn_context", ctx));
  s.push_back(bertpe::detail::composite_case("encoder_adapter_cacnn_simplified", simple));
  return s;
}

}  // namespace bertpe
