// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment manifests: flat `key = value` lines grouped under `[label]`
// section headers. A `[defaults]` section applies to every experiment that
// follows it unless overridden. `#` starts a comment.

#pragma once

#include <bertpe/accounting.hpp>
#include <bertpe/trainer.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace bertpe {

struct ExperimentSpec {
  std::string label;
  EncoderConfig encoder;
  FreezePolicy policy;
  HeadConfig head = AffineSpanHead{};
  TrainConfig train;
  DatasetParams data;      // training split
  std::size_t eval_count = 500;
  std::string out_dir;     // empty = use the command's --out

  CountRow count_row() const { return {label, encoder, policy, head}; }

  /// Held-out split drawn from its own stream.
  DatasetParams eval_data() const {
    DatasetParams p = data;
    p.seed = data.seed + 1'000'003;
    p.count = eval_count;
    return p;
  }
};

inline const std::vector<std::string>& manifest_keys() {
  static const std::vector<std::string> keys{
      "preset", "vocab_size", "hidden_size", "num_layers", "num_heads",
      "intermediate_size", "max_seq_len", "layers_trainable",
      "embeddings_trainable", "adapters_trainable", "adapter_size",
      "adapter_init_scale", "head", "variant", "n_f", "w1", "w_c", "m", "K", "w2",
      "reduction", "stage_relu", "batch_size", "epochs", "learning_rate", "seed",
      "data_seed", "dataset_count", "dataset_len", "eval_count", "needle_min",
      "needle_max", "unanswerable_fraction", "max_answer_len", "out_dir"};
  return keys;
}

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Section = std::map<std::string, std::pair<std::string, std::size_t>>;  // key -> (value, line)

class SectionReader {
 public:
  SectionReader(std::string label, Section values)
      : label_(std::move(label)), values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string str(const std::string& key, std::string fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.first;
  }

  std::size_t size(const std::string& key, std::size_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second.first;
    std::size_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) fail(key, "a non-negative integer");
    return out;
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second.first;
    // "1/3" style fractions are accepted for convenience.
    if (auto slash = v.find('/'); slash != std::string::npos) {
      try {
        return std::stod(v.substr(0, slash)) / std::stod(v.substr(slash + 1));
      } catch (const std::exception&) {
        fail(key, "a number");
      }
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) fail(key, "a number");
      return d;
    } catch (const std::logic_error&) {
      fail(key, "a number");
    }
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second.first;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "true or false");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    auto it = values_.find(key);
    const std::string where =
        it == values_.end() ? "" : " (line " + std::to_string(it->second.second) + ")";
    throw ConfigError("[" + label_ + "] key '" + key + "'" + where + ": expected " +
                      expected + ", got '" + (it == values_.end() ? "" : it->second.first) +
                      "'");
  }

 private:
  std::string label_;
  Section values_;
};

inline bool valid_label(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

inline ExperimentSpec build_spec(const std::string& label, const SectionReader& r) {
  ExperimentSpec s;
  s.label = label;
  const std::string preset = r.str("preset", "desk");
  if (preset == "desk") {
    s.encoder = EncoderConfig::desk(2);
  } else if (preset == "desk4") {
    s.encoder = EncoderConfig::desk(4);
  } else if (preset == "bert-base") {
    s.encoder = EncoderConfig::bert_base();
  } else {
    r.fail("preset", "one of desk, desk4, bert-base");
  }
  auto& e = s.encoder;
  e.vocab_size = r.size("vocab_size", e.vocab_size);
  e.hidden_size = r.size("hidden_size", e.hidden_size);
  e.num_layers = r.size("num_layers", e.num_layers);
  e.num_heads = r.size("num_heads", e.num_heads);
  e.intermediate_size = r.size("intermediate_size", e.intermediate_size);
  e.max_seq_len = r.size("max_seq_len", e.max_seq_len);
  if (const std::size_t a = r.size("adapter_size", 0); a > 0) {
    e.adapter = AdapterConfig{a, r.real("adapter_init_scale", 0.0)};
  }
  try {
    e.validate();
  } catch (const ConfigError& err) {
    throw ConfigError("[" + label + "] " + err.what());
  }

  const std::string layers = r.str("layers_trainable", "all");
  if (layers == "all") {
    s.policy.top_layers_trainable = e.num_layers;
  } else if (layers == "half") {
    s.policy.top_layers_trainable = e.num_layers / 2;
  } else {
    s.policy.top_layers_trainable = r.size("layers_trainable", 0);
    if (s.policy.top_layers_trainable > e.num_layers)
      r.fail("layers_trainable", "at most num_layers (" + std::to_string(e.num_layers) + ")");
  }
  s.policy.embeddings_trainable =
      r.boolean("embeddings_trainable", s.policy.top_layers_trainable == e.num_layers);
  s.policy.adapters_trainable = r.boolean("adapters_trainable", true);

  const std::string head = r.str("head", "affine_span");
  if (head == "cacnn") {
    CacnnConfig c;
    const std::string variant = r.str("variant", "context_vector");
    if (variant == "context_vector") {
      c.variant = CacnnVariant::context_vector;
    } else if (variant == "simplified") {
      c.variant = CacnnVariant::simplified;
    } else {
      r.fail("variant", "context_vector or simplified");
    }
    c.initial_filters = r.size("n_f", c.initial_filters);
    c.initial_width = r.size("w1", c.initial_width);
    c.context_width = r.size("w_c", c.context_width);
    c.context_filters = r.size("m", c.context_filters);
    c.sample_filters = r.size("K", c.sample_filters);
    c.sample_width = r.size("w2", c.sample_width);
    const std::string red = r.str("reduction", "max");
    if (red == "max") {
      c.reduction = LengthReduction::max;
    } else if (red == "sum") {
      c.reduction = LengthReduction::sum;
    } else {
      r.fail("reduction", "max or sum");
    }
    c.stage_relu = r.boolean("stage_relu", false);
    s.head = c;
  } else if (head != "affine_span") {
    r.fail("head", "affine_span or cacnn");
  }

  auto& t = s.train;
  t.batch_size = r.size("batch_size", t.batch_size);
  t.epochs = r.size("epochs", t.epochs);
  t.learning_rate = r.real("learning_rate", t.learning_rate);
  t.seed = r.size("seed", 0);
  t.max_answer_len = r.size("max_answer_len", t.max_answer_len);
  try {
    t.validate();
  } catch (const ConfigError& err) {
    throw ConfigError("[" + label + "] " + err.what());
  }

  auto& d = s.data;
  d.seed = r.size("data_seed", 0);
  d.count = r.size("dataset_count", 2000);
  d.seq_len = r.size("dataset_len", std::min<std::size_t>(64, e.max_seq_len));
  d.vocab = e.vocab_size;
  d.needle_min = r.size("needle_min", d.needle_min);
  d.needle_max = r.size("needle_max", d.needle_max);
  d.unanswerable_fraction = r.real("unanswerable_fraction", d.unanswerable_fraction);
  if (d.seq_len > e.max_seq_len) r.fail("dataset_len", "at most max_seq_len");
  if (d.unanswerable_fraction < 0.0 || d.unanswerable_fraction > 1.0)
    r.fail("unanswerable_fraction", "a value in [0, 1]");
  s.eval_count = r.size("eval_count", s.eval_count);
  s.out_dir = r.str("out_dir", "");

  if (const auto* c = std::get_if<CacnnConfig>(&s.head)) {
    try {
      c->validate(e.hidden_size, d.seq_len);
    } catch (const ConfigError& err) {
      throw ConfigError("[" + label + "] " + err.what());
    }
  }
  return s;
}

}  // namespace detail

/// Parses a manifest. Unknown keys are rejected with the closest valid key.
inline std::vector<ExperimentSpec> parse_manifest(std::istream& in) {
  std::vector<std::pair<std::string, detail::Section>> sections;
  detail::Section defaults;
  detail::Section* current = nullptr;
  std::set<std::string> seen;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      }
      const std::string label = detail::trim(line.substr(1, line.size() - 2));
      if (label == "defaults") {
        current = &defaults;
        continue;
      }
      if (!detail::valid_label(label)) {
        throw ConfigError("line " + std::to_string(lineno) + ": label '" + label +
                          "' must match [A-Za-z0-9_-]+");
      }
      if (!seen.insert(label).second) {
        throw ConfigError("line " + std::to_string(lineno) + ": duplicate label '" +
                          label + "'");
      }
      sections.emplace_back(label, defaults);
      current = &sections.back().second;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& keys = manifest_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string best;
      std::size_t best_d = 4;
      for (const auto& k : keys) {
        if (const std::size_t d = detail::edit_distance(key, k); d < best_d) {
          best_d = d;
          best = k;
        }
      }
      std::string msg = "line " + std::to_string(lineno) + ": unknown key '" + key + "'";
      if (!best.empty()) msg += "; did you mean '" + best + "'?";
      throw ConfigError(msg);
    }
    if (!current) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    }
    (*current)[key] = {value, lineno};
  }
  std::vector<ExperimentSpec> specs;
  for (auto& [label, values] : sections) {
    specs.push_back(detail::build_spec(label, detail::SectionReader(label, std::move(values))));
  }
  return specs;
}

inline std::vector<ExperimentSpec> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  return parse_manifest(in);
}

}  // namespace bertpe
