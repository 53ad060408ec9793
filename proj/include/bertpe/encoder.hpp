// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// BERT-style post-layer-norm transformer encoder with optional bottleneck
// adapters inside each sub-layer's residual branch.

#pragma once

#include <bertpe/ops.hpp>
#include <bertpe/registry.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace bertpe {

/// Raised for configurations that violate their documented invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AdapterConfig {
  std::size_t size = 64;
  // Std-dev of the up-projection init; 0 makes every adapter the identity.
  double init_scale = 0.0;
};

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t hidden_size = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t intermediate_size = 128;
  std::size_t max_seq_len = 64;
  std::size_t segment_types = 2;
  std::optional<AdapterConfig> adapter;

  static EncoderConfig desk(std::size_t layers = 2) {
    EncoderConfig c;
    c.num_layers = layers;
    return c;
  }

  static EncoderConfig bert_base() {
    EncoderConfig c;
    c.vocab_size = 30522;
    c.hidden_size = 768;
    c.num_layers = 12;
    c.num_heads = 12;
    c.intermediate_size = 3072;
    c.max_seq_len = 512;
    return c;
  }

  std::size_t head_dim() const { return hidden_size / num_heads; }

  void validate() const {
    if (vocab_size == 0 || hidden_size == 0 || num_layers == 0 ||
        num_heads == 0 || intermediate_size == 0 || max_seq_len == 0) {
      throw ConfigError("EncoderConfig: all sizes must be positive");
    }
    if (hidden_size % num_heads != 0) {
      throw ConfigError("EncoderConfig: hidden_size " +
                        std::to_string(hidden_size) +
                        " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (segment_types != 2) throw ConfigError("EncoderConfig: segment_types must be 2");
    if (adapter && adapter->size == 0) {
      throw ConfigError("AdapterConfig: adapter size must be at least 1");
    }
  }
};

/// Which encoder parameters receive updates. Layer norms and the task head
/// are always trainable regardless of these fields.
struct FreezePolicy {
  std::size_t top_layers_trainable = 0;
  bool embeddings_trainable = false;
  bool adapters_trainable = true;

  static FreezePolicy full(const EncoderConfig& c) {
    return FreezePolicy{c.num_layers, true, true};
  }

  void validate(const EncoderConfig& c) const {
    if (top_layers_trainable > c.num_layers) {
      throw ConfigError("FreezePolicy: " + std::to_string(top_layers_trainable) +
                        " trainable layers requested but the encoder has " +
                        std::to_string(c.num_layers));
    }
  }
};

enum class ParamRole { embedding, attention, ffn, layer_norm, adapter, head };

/// Role of a registry entry, derived from its name.
inline ParamRole role_of(const std::string& name) {
  if (name.starts_with("head.")) return ParamRole::head;
  if (name.find(".adapter.") != std::string::npos) return ParamRole::adapter;
  if (name.find(".ln.") != std::string::npos) return ParamRole::layer_norm;
  if (name.starts_with("embeddings.")) return ParamRole::embedding;
  if (name.find(".attention.") != std::string::npos) return ParamRole::attention;
  if (name.find(".ffn.") != std::string::npos) return ParamRole::ffn;
  throw std::invalid_argument("role_of: unrecognized parameter name " + name);
}

/// Transformer layer index for "layer.<i>." names.
inline std::optional<std::size_t> layer_of(const std::string& name) {
  if (!name.starts_with("layer.")) return std::nullopt;
  return std::stoul(name.substr(6));
}

inline std::string layer_prefix(std::size_t layer) {
  return "layer." + std::to_string(layer) + ".";
}

namespace detail {

enum class Init { normal, zeros, ones, adapter_up };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  bool adapter;
};

inline void push_affine(std::vector<ParamSpec>& out, const std::string& base,
                        std::size_t in, std::size_t outd, bool adapter,
                        Init weight_init = Init::normal) {
  out.push_back({base + ".weight", {in, outd}, weight_init, adapter});
  out.push_back({base + ".bias", {outd}, Init::zeros, adapter});
}

inline void push_ln(std::vector<ParamSpec>& out, const std::string& base,
                    std::size_t h) {
  out.push_back({base + ".gain", {h}, Init::ones, false});
  out.push_back({base + ".bias", {h}, Init::zeros, false});
}

inline void push_adapter(std::vector<ParamSpec>& out, const std::string& base,
                         std::size_t h, std::size_t a) {
  push_affine(out, base + ".down", h, a, true);
  push_affine(out, base + ".up", a, h, true, Init::adapter_up);
}

// Full encoder layout in registry order.
inline std::vector<ParamSpec> encoder_layout(const EncoderConfig& c) {
  const std::size_t h = c.hidden_size;
  std::vector<ParamSpec> specs;
  specs.push_back({"embeddings.token", {c.vocab_size, h}, Init::normal, false});
  specs.push_back({"embeddings.position", {c.max_seq_len, h}, Init::normal, false});
  specs.push_back({"embeddings.segment", {c.segment_types, h}, Init::normal, false});
  push_ln(specs, "embeddings.ln", h);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* proj : {"query", "key", "value", "output"})
      push_affine(specs, p + "attention." + proj, h, h, false);
    if (c.adapter) push_adapter(specs, p + "attention.adapter", h, c.adapter->size);
    push_ln(specs, p + "attention.ln", h);
    push_affine(specs, p + "ffn.intermediate", h, c.intermediate_size, false);
    push_affine(specs, p + "ffn.output", c.intermediate_size, h, false);
    if (c.adapter) push_adapter(specs, p + "ffn.adapter", h, c.adapter->size);
    push_ln(specs, p + "ffn.ln", h);
  }
  return specs;
}

inline double truncated_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(rng);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

}  // namespace detail

constexpr double kInitStddev = 0.02;

/// Shapes-only registry for counting at any scale without allocating weights.
inline ParameterRegistry build_encoder_layout(const EncoderConfig& config) {
  config.validate();
  ParameterRegistry reg;
  for (auto& s : detail::encoder_layout(config)) reg.add(s.name, s.shape);
  return reg;
}

/// Builds and initializes the encoder parameters. Base weights and adapter
/// weights come from separate random streams, so the base weights for a
/// given seed do not depend on whether adapters are configured.
inline ParameterRegistry build_encoder(const EncoderConfig& config,
                                       std::uint64_t seed) {
  config.validate();
  std::seed_seq base_seq{seed, std::uint64_t{0}};
  std::seed_seq adapter_seq{seed, std::uint64_t{1}};
  std::mt19937_64 base_rng(base_seq), adapter_rng(adapter_seq);
  ParameterRegistry reg;
  for (auto& s : detail::encoder_layout(config)) {
    std::vector<double> values(numel(s.shape), 0.0);
    auto& rng = s.adapter ? adapter_rng : base_rng;
    switch (s.init) {
      case detail::Init::normal:
        for (double& v : values) v = detail::truncated_normal(rng, kInitStddev);
        break;
      case detail::Init::ones:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case detail::Init::adapter_up:
        if (config.adapter->init_scale > 0.0)
          for (double& v : values)
            v = detail::truncated_normal(rng, config.adapter->init_scale);
        break;
      case detail::Init::zeros:
        break;
    }
    reg.add(s.name, s.shape, std::move(values));
  }
  return reg;
}

/// Sets trainable flags: attention and FFN weights of the bottom N−k layers
/// are frozen, embeddings and adapters follow the policy switches, layer
/// norms and head entries are always trainable.
inline void apply_freeze_policy(ParameterRegistry& registry,
                                const EncoderConfig& config,
                                const FreezePolicy& policy) {
  policy.validate(config);
  const std::size_t first_trainable = config.num_layers - policy.top_layers_trainable;
  for (auto& p : registry) {
    switch (role_of(p.name)) {
      case ParamRole::embedding:
        p.trainable = policy.embeddings_trainable;
        break;
      case ParamRole::attention:
      case ParamRole::ffn:
        p.trainable = *layer_of(p.name) >= first_trainable;
        break;
      case ParamRole::adapter:
        p.trainable = policy.adapters_trainable;
        break;
      case ParamRole::layer_norm:
      case ParamRole::head:
        p.trainable = true;
        break;
    }
  }
}

/// How registry entries become tape leaves.
enum class GradMode { trainable_only, all, none };

/// Registry entries bound as leaves of one tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParameterRegistry& registry,
              GradMode mode = GradMode::trainable_only)
      : tape_(&tape) {
    for (const auto& p : registry) {
      if (!p.materialized()) {
        throw std::logic_error("BoundParams: " + p.name + " has no values");
      }
      const bool rg = mode == GradMode::all ||
                      (mode == GradMode::trainable_only && p.trainable);
      vars_.emplace(p.name, tape.leaf(ValueGrid(p.shape, p.values), rg));
    }
  }

  BoundParams(Tape& tape, std::unordered_map<std::string, Var> vars)
      : tape_(&tape), vars_(std::move(vars)) {}

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) {
      throw std::out_of_range("BoundParams: no parameter named " + name);
    }
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.contains(name); }
  Tape& tape() const { return *tape_; }
  const std::unordered_map<std::string, Var>& vars() const { return vars_; }

 private:
  Tape* tape_;
  std::unordered_map<std::string, Var> vars_;
};

/// Optional capture of attention probabilities, [layer][head] -> [L×L].
struct AttentionTrace {
  std::vector<std::vector<ValueGrid>> probabilities;
};

constexpr double kMaskedScore = -1e9;
constexpr double kLayerNormEps = 1e-12;

namespace detail {

inline Var affine(const BoundParams& p, Var x, const std::string& base) {
  return ops::add_row(ops::matmul(x, p[base + ".weight"]), p[base + ".bias"]);
}

inline Var layer_norm(const BoundParams& p, Var x, const std::string& base) {
  return ops::layer_norm(x, p[base + ".gain"], p[base + ".bias"], kLayerNormEps);
}

// z + Up(gelu(Down(z))).
inline Var adapter(const BoundParams& p, Var z, const std::string& base) {
  Var down = ops::gelu(affine(p, z, base + ".down"));
  return ops::add(z, affine(p, down, base + ".up"));
}

}  // namespace detail

/// Encodes one sequence into [L×H] contextual vectors.
///
/// `attention_mask[i] == 0` hides position i from every query.
inline Var encoder_forward(const BoundParams& p, const EncoderConfig& config,
                           const std::vector<std::size_t>& tokens,
                           const std::vector<std::size_t>& segments,
                           const std::vector<std::uint8_t>& attention_mask,
                           AttentionTrace* trace = nullptr) {
  const std::size_t len = tokens.size();
  if (len == 0 || len > config.max_seq_len) {
    throw ShapeError("encoder_forward: sequence length " + std::to_string(len) +
                     " outside [1, " + std::to_string(config.max_seq_len) + "]");
  }
  if (segments.size() != len || attention_mask.size() != len) {
    throw ShapeError("encoder_forward: tokens, segments and mask lengths differ");
  }
  for (std::size_t i = 0; i < len; ++i) {
    if (tokens[i] >= config.vocab_size) {
      throw std::out_of_range("encoder_forward: token id " +
                              std::to_string(tokens[i]) + " at position " +
                              std::to_string(i) + " >= vocab size " +
                              std::to_string(config.vocab_size));
    }
    if (segments[i] >= config.segment_types) {
      throw std::out_of_range("encoder_forward: segment id " +
                              std::to_string(segments[i]) + " at position " +
                              std::to_string(i));
    }
  }
  Tape& tape = p.tape();
  std::vector<std::size_t> positions(len);
  for (std::size_t i = 0; i < len; ++i) positions[i] = i;

  Var x = ops::add(ops::add(ops::embedding_lookup(p["embeddings.token"], tokens),
                            ops::embedding_lookup(p["embeddings.position"], positions)),
                   ops::embedding_lookup(p["embeddings.segment"], segments));
  x = detail::layer_norm(p, x, "embeddings.ln");

  ValueGrid mask_grid({len, len});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j)
      mask_grid(i, j) = attention_mask[j] ? 0.0 : kMaskedScore;
  Var mask = tape.constant(std::move(mask_grid));

  const std::size_t heads = config.num_heads;
  const std::size_t dh = config.head_dim();
  const std::vector<std::size_t> head_sizes(heads, dh);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (trace) trace->probabilities.assign(config.num_layers, {});

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string pre = layer_prefix(l);
    auto q = ops::split(detail::affine(p, x, pre + "attention.query"), 1, head_sizes);
    auto k = ops::split(detail::affine(p, x, pre + "attention.key"), 1, head_sizes);
    auto v = ops::split(detail::affine(p, x, pre + "attention.value"), 1, head_sizes);
    std::vector<Var> contexts;
    contexts.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Var scores = ops::scale(ops::matmul(q[hd], ops::transpose(k[hd])), inv_sqrt);
      Var probs = ops::softmax(ops::add(scores, mask), 1);
      if (trace) trace->probabilities[l].push_back(probs.value());
      contexts.push_back(ops::matmul(probs, v[hd]));
    }
    Var attn = detail::affine(p, ops::concat(contexts, 1), pre + "attention.output");
    if (config.adapter) attn = detail::adapter(p, attn, pre + "attention.adapter");
    x = detail::layer_norm(p, ops::add(x, attn), pre + "attention.ln");

    Var ffn = ops::gelu(detail::affine(p, x, pre + "ffn.intermediate"));
    ffn = detail::affine(p, ffn, pre + "ffn.output");
    if (config.adapter) ffn = detail::adapter(p, ffn, pre + "ffn.adapter");
    x = detail::layer_norm(p, ops::add(x, ffn), pre + "ffn.ln");
  }
  return x;
}

}  // namespace bertpe
