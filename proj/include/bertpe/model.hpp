// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder plus span head: the full F(X, q, θ) used for training.

#pragma once

#include <bertpe/cacnn.hpp>
#include <bertpe/encoder.hpp>
#include <bertpe/span_task.hpp>

#include <variant>

namespace bertpe {

/// Single affine H -> 2 applied at every position.
struct AffineSpanHead {
  std::uint64_t parameter_count(std::size_t hidden) const { return 2 * hidden + 2; }
};

using HeadConfig = std::variant<AffineSpanHead, CacnnConfig>;

inline std::uint64_t head_parameter_count(const HeadConfig& head, std::size_t hidden) {
  return std::visit([&](const auto& h) { return h.parameter_count(hidden); }, head);
}

/// Adds head parameters. A null rng gives a layout-only head.
inline void add_head(ParameterRegistry& reg, const HeadConfig& head,
                     std::size_t hidden, std::mt19937_64* rng) {
  if (const auto* c = std::get_if<CacnnConfig>(&head)) {
    add_cacnn_head(reg, *c, hidden, rng);
    return;
  }
  std::vector<double> w, b;
  if (rng) {
    w.resize(hidden * 2);
    for (double& v : w) v = detail::truncated_normal(*rng, kInitStddev);
    b.assign(2, 0.0);
  }
  reg.add("head.span.weight", {hidden, 2}, std::move(w));
  reg.add("head.span.bias", {2}, std::move(b));
}

struct Model {
  EncoderConfig encoder;
  HeadConfig head;
  ParameterRegistry params;
};

inline Model build_model(const EncoderConfig& encoder, const HeadConfig& head,
                         std::uint64_t seed) {
  Model m{encoder, head, build_encoder(encoder, seed)};
  std::seed_seq head_seq{seed, std::uint64_t{2}};
  std::mt19937_64 rng(head_seq);
  add_head(m.params, head, encoder.hidden_size, &rng);
  return m;
}

inline Model build_model_layout(const EncoderConfig& encoder, const HeadConfig& head) {
  Model m{encoder, head, build_encoder_layout(encoder)};
  add_head(m.params, head, encoder.hidden_size, nullptr);
  return m;
}

inline void apply_freeze_policy(Model& model, const FreezePolicy& policy) {
  apply_freeze_policy(model.params, model.encoder, policy);
}

/// Start/end logits for one token sequence.
inline SpanLogits model_forward(const BoundParams& p, const EncoderConfig& encoder,
                                const HeadConfig& head,
                                const std::vector<std::size_t>& tokens,
                                const std::vector<std::size_t>& segments,
                                const std::vector<std::uint8_t>& mask) {
  Var x = encoder_forward(p, encoder, tokens, segments, mask);
  if (const auto* c = std::get_if<CacnnConfig>(&head)) {
    const auto cp = CacnnParams::bind(p, *c);
    return head_logits(cacnn_features(x, cp, *c), cp.affine_weight, cp.affine_bias);
  }
  return head_logits(x, p["head.span.weight"], p["head.span.bias"]);
}

inline SpanLogits model_forward(const BoundParams& p, const Model& m,
                                const SpanExample& ex) {
  return model_forward(p, m.encoder, m.head, ex.tokens, ex.segments,
                       std::vector<std::uint8_t>(ex.tokens.size(), 1));
}

/// Mean of the start and end cross-entropies against the gold span; a null
/// gold supervises position 0 for both.
inline Var span_loss(const SpanLogits& logits, Span gold) {
  Var ls = ops::cross_entropy_from_logits(logits.start, gold.start);
  Var le = ops::cross_entropy_from_logits(logits.end, gold.end);
  return ops::scale(ops::add(ls, le), 0.5);
}

}  // namespace bertpe
