// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form trainable-parameter accounting and the report table / CSV
// used by every CLI command.

#pragma once

#include <bertpe/model.hpp>

#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bertpe {

struct CountReport {
  std::size_t num_layers = 0;
  std::uint64_t embeddings = 0;           // token + position + segment tables
  std::uint64_t attention_per_layer = 0;  // Q, K, V, O weights and biases
  std::uint64_t ffn_per_layer = 0;        // both FFN projections
  std::uint64_t layer_norms = 0;          // every gain/bias pair, embeddings included
  std::uint64_t adapter_per_block = 0;    // one down + up projection
  std::uint64_t adapters = 0;             // all adapter blocks
  std::uint64_t head = 0;
  std::uint64_t total = 0;
  std::uint64_t trainable = 0;

  std::uint64_t subtotal_sum() const {
    return embeddings + num_layers * (attention_per_layer + ffn_per_layer) +
           layer_norms + adapters + head;
  }
};

/// Parameter counts by arithmetic alone; agrees with any registry built
/// from the same configuration and policy.
inline CountReport count(const EncoderConfig& config, const FreezePolicy& policy,
                         const HeadConfig& head) {
  config.validate();
  policy.validate(config);
  const std::uint64_t h = config.hidden_size;
  const std::uint64_t inter = config.intermediate_size;
  CountReport r;
  r.num_layers = config.num_layers;
  r.embeddings = (config.vocab_size + config.max_seq_len + config.segment_types) * h;
  r.attention_per_layer = 4 * (h * h + h);
  r.ffn_per_layer = 2 * h * inter + inter + h;
  r.layer_norms = 2 * h + config.num_layers * 4 * h;
  if (config.adapter) {
    const std::uint64_t a = config.adapter->size;
    r.adapter_per_block = 2 * h * a + a + h;
    r.adapters = 2 * config.num_layers * r.adapter_per_block;
  }
  r.head = head_parameter_count(head, config.hidden_size);
  r.total = r.subtotal_sum();
  r.trainable = (policy.embeddings_trainable ? r.embeddings : 0) +
                policy.top_layers_trainable * (r.attention_per_layer + r.ffn_per_layer) +
                r.layer_norms + (policy.adapters_trainable ? r.adapters : 0) + r.head;
  return r;
}

/// A trainable-parameter figure published for a BERT-base configuration.
struct PublishedCount {
  const char* label;
  std::size_t layers_trained;
  bool embeddings_trainable;
  std::size_t adapter_size;  // 0 = no adapters
  std::uint64_t trainable;
  const char* note;
};

inline const std::vector<PublishedCount>& published_counts() {
  static const std::vector<PublishedCount> table{
      {"L12", 12, true, 0, 108'311'810,
       "the published figure implies 23,254,272 embedding parameters; "
       "standard BERT-base embeddings (30522*768 + 512*768 + 2*768) total "
       "23,835,648"},
      {"L6", 6, false, 0, 42'548'738, ""},
      {"L3", 3, false, 0, 21'294'338, ""},
      {"L1", 1, false, 0, 7'124'738, ""},
      {"L0", 0, false, 0, 39'938, ""},
      {"L12-A64", 12, true, 64, 110'691'074,
       "the adapter delta over L12 (2,379,264) matches exactly; the "
       "remainder is the L12 embedding discrepancy"},
      {"L0-A64", 0, false, 64, 2'417'664,
       "the published figure equals the computed value minus the "
       "1,538-parameter span head"},
      {"L0-A768", 0, false, 768, 28'388'354, ""},
  };
  return table;
}

/// Published figure for this exact configuration, if there is one.
inline std::optional<PublishedCount> find_published(const EncoderConfig& config,
                                                    const FreezePolicy& policy,
                                                    const HeadConfig& head) {
  EncoderConfig base = config;
  base.adapter.reset();
  const EncoderConfig ref = EncoderConfig::bert_base();
  const bool same_encoder =
      base.vocab_size == ref.vocab_size && base.hidden_size == ref.hidden_size &&
      base.num_layers == ref.num_layers && base.num_heads == ref.num_heads &&
      base.intermediate_size == ref.intermediate_size &&
      base.max_seq_len == ref.max_seq_len;
  if (!same_encoder || !std::holds_alternative<AffineSpanHead>(head) ||
      !policy.adapters_trainable) {
    return std::nullopt;
  }
  const std::size_t a = config.adapter ? config.adapter->size : 0;
  for (const auto& p : published_counts()) {
    if (p.layers_trained == policy.top_layers_trainable &&
        p.embeddings_trainable == policy.embeddings_trainable && p.adapter_size == a)
      return p;
  }
  return std::nullopt;
}

/// One row of a results table. Metrics are empty when the model was only
/// counted, not run.
struct ReportRow {
  std::string label;
  std::size_t layers_trained = 0;
  std::size_t adapter_size = 0;
  std::uint64_t trainable_params = 0;
  std::optional<double> em;  // percent
  std::optional<double> f1;  // percent
  std::optional<double> train_seconds;
  std::optional<double> inference_seconds;
  std::optional<double> efficiency_ratio;
};

struct ReportTable {
  bool with_efficiency = false;
  std::vector<ReportRow> rows;
};

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "label", "layers_trained", "adapter_size", "trainable_params",
      "em",    "f1",             "train_seconds", "inference_seconds"};
  return cols;
}

namespace detail {

inline std::string fmt(const std::optional<double>& v, const char* spec) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, *v);
  return buf;
}

inline std::string with_commas(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const ReportTable& table) {
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  if (table.with_efficiency) out << ",efficiency_ratio";
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.label << ',' << r.layers_trained << ',' << r.adapter_size << ','
        << r.trainable_params << ',' << detail::fmt(r.em, "%.1f") << ','
        << detail::fmt(r.f1, "%.1f") << ',' << detail::fmt(r.train_seconds, "%.3f")
        << ',' << detail::fmt(r.inference_seconds, "%.3f");
    if (table.with_efficiency) out << ',' << detail::fmt(r.efficiency_ratio, "%.4f");
    out << '\n';
  }
}

/// Reads a report written by write_report_csv. Throws std::runtime_error
/// naming the first missing or unexpected column.
inline ReportTable read_report_csv(std::istream& in) {
  ReportTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("report: empty file");
  const auto header = detail::split_csv_line(line);
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i >= header.size() || header[i] != cols[i]) {
      throw std::runtime_error("report: missing column '" + cols[i] + "'");
    }
  }
  if (header.size() == cols.size() + 1 && header.back() == "efficiency_ratio") {
    table.with_efficiency = true;
  } else if (header.size() != cols.size()) {
    throw std::runtime_error("report: unexpected column '" + header[cols.size()] + "'");
  }
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::runtime_error("report: line " + std::to_string(lineno) +
                               " has " + std::to_string(f.size()) + " fields");
    }
    ReportRow r;
    r.label = f[0];
    r.layers_trained = std::stoul(f[1]);
    r.adapter_size = std::stoul(f[2]);
    r.trainable_params = std::stoull(f[3]);
    r.em = opt(f[4]);
    r.f1 = opt(f[5]);
    r.train_seconds = opt(f[6]);
    r.inference_seconds = opt(f[7]);
    if (table.with_efficiency) r.efficiency_ratio = opt(f[8]);
    table.rows.push_back(std::move(r));
  }
  return table;
}

/// A configuration to count.
struct CountRow {
  std::string label;
  EncoderConfig encoder;
  FreezePolicy policy;
  HeadConfig head = AffineSpanHead{};
};

struct TableReport {
  std::string text;  // aligned table with footnotes
  std::string csv;
  std::vector<CountReport> counts;
};

/// Renders rows as a fixed-column text table and CSV. Rows whose computed
/// count differs from a published figure are marked † and footnoted.
inline TableReport table_report(const std::vector<CountRow>& rows,
                                const ReportTable* metrics = nullptr) {
  TableReport out;
  ReportTable csv_table;
  csv_table.with_efficiency = metrics && metrics->with_efficiency;
  std::vector<std::string> footnotes;
  std::ostringstream text;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %7s %8s %16s %6s %6s %10s %10s\n", "label",
                "layers", "adapter", "trainable", "EM", "F1", "train_s", "infer_s");
  text << line;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const CountReport c = count(row.encoder, row.policy, row.head);
    out.counts.push_back(c);
    ReportRow r;
    if (metrics && i < metrics->rows.size()) r = metrics->rows[i];
    r.label = row.label;
    r.layers_trained = row.policy.top_layers_trainable;
    r.adapter_size = row.encoder.adapter ? row.encoder.adapter->size : 0;
    r.trainable_params = c.trainable;
    std::string count_text = detail::with_commas(c.trainable);
    if (auto pub = find_published(row.encoder, row.policy, row.head);
        pub && pub->trainable != c.trainable) {
      count_text += "†";
      std::string note = "† " + row.label + ": computed " +
                         detail::with_commas(c.trainable) + ", published " +
                         detail::with_commas(pub->trainable);
      if (*pub->note) note += "; " + std::string(pub->note);
      footnotes.push_back(note);
    }
    // The dagger is 3 bytes but one column wide.
    const int pad = count_text.find("†") != std::string::npos ? 18 : 16;
    std::snprintf(line, sizeof line, "%-16s %7zu %8zu %*s %6s %6s %10s %10s\n",
                  r.label.c_str(), r.layers_trained, r.adapter_size, pad,
                  count_text.c_str(), detail::fmt(r.em, "%.1f").c_str(),
                  detail::fmt(r.f1, "%.1f").c_str(),
                  detail::fmt(r.train_seconds, "%.3f").c_str(),
                  detail::fmt(r.inference_seconds, "%.3f").c_str());
    text << line;
    csv_table.rows.push_back(std::move(r));
  }
  if (!footnotes.empty()) {
    text << '\n';
    for (const auto& f : footnotes) text << f << '\n';
  }
  out.text = text.str();
  std::ostringstream csv;
  write_report_csv(csv, csv_table);
  out.csv = csv.str();
  return out;
}

}  // namespace bertpe
