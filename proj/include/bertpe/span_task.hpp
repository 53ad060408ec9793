// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic span-extraction task: needle-in-context examples, joint span
// decoding with a null answer, and exact-match / token-overlap F1 scoring.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bertpe {

/// Token-index answer span. (0, 0) means "no answer".
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  bool is_null() const { return start == 0 && end == 0; }
  std::size_t length() const { return end - start + 1; }
  bool operator==(const Span&) const = default;
};

inline constexpr Span kNoAnswer{0, 0};

/// One task instance: [CLS] query [SEP] context.
struct SpanExample {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> segments;  // 0 = query side, 1 = context side
  Span gold;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const SpanExample&) const = default;
};

struct SpanPrediction {
  Span span;
  double score = 0.0;  // start+end logit of the chosen span (null score if null)
  std::vector<double> start_logits;
  std::vector<double> end_logits;
};

inline constexpr std::size_t kClsToken = 0;
inline constexpr std::size_t kSepToken = 1;
inline constexpr std::size_t kFirstContentToken = 2;
inline constexpr std::size_t kDefaultMaxAnswerLen = 30;

struct DatasetParams {
  std::uint64_t seed = 0;
  std::size_t count = 100;
  std::size_t seq_len = 64;
  std::size_t vocab = 64;
  std::size_t needle_min = 1;
  std::size_t needle_max = 1;
  double unanswerable_fraction = 1.0 / 3.0;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::size_t count_occurrences(std::span<const std::size_t> hay,
                                     std::span<const std::size_t> needle) {
  if (needle.size() > hay.size()) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + i)) ++n;
  return n;
}

}  // namespace detail

/// Generates examples whose query is a random k-gram. Answerable examples
/// contain it exactly once in the context; unanswerable ones never do.
inline std::vector<SpanExample> generate_dataset(const DatasetParams& p) {
  constexpr int kMaxTries = 1000;
  if (p.unanswerable_fraction < 0.0 || p.unanswerable_fraction > 1.0) {
    throw GenerationError("generate_dataset: unanswerable_fraction outside [0, 1]");
  }
  if (p.needle_min == 0 || p.needle_min > p.needle_max) {
    throw GenerationError("generate_dataset: invalid needle length range");
  }
  if (p.vocab <= kFirstContentToken) {
    throw GenerationError("generate_dataset: vocab has no content tokens");
  }
  // [CLS] needle [SEP] context, with room for the needle in the context.
  if (p.seq_len < 2 + 2 * p.needle_max) {
    throw GenerationError("generate_dataset: seq_len " + std::to_string(p.seq_len) +
                          " cannot fit needles of length " +
                          std::to_string(p.needle_max));
  }
  std::mt19937_64 rng(p.seed);
  std::uniform_int_distribution<std::size_t> token(kFirstContentToken, p.vocab - 1);
  std::uniform_int_distribution<std::size_t> needle_len(p.needle_min, p.needle_max);
  std::bernoulli_distribution unanswerable(p.unanswerable_fraction);

  std::vector<SpanExample> out;
  out.reserve(p.count);
  for (std::size_t e = 0; e < p.count; ++e) {
    const bool null_answer = unanswerable(rng);
    const std::size_t k = needle_len(rng);
    std::vector<std::size_t> needle(k);
    for (auto& t : needle) t = token(rng);
    const std::size_t ctx_start = k + 2;
    const std::size_t ctx_len = p.seq_len - ctx_start;
    std::uniform_int_distribution<std::size_t> where(0, ctx_len - k);

    std::vector<std::size_t> context(ctx_len);
    Span gold = kNoAnswer;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
      for (auto& t : context) t = token(rng);
      if (null_answer) {
        ok = detail::count_occurrences(context, needle) == 0;
      } else {
        const std::size_t at = where(rng);
        std::copy(needle.begin(), needle.end(), context.begin() + at);
        ok = detail::count_occurrences(context, needle) == 1;
        gold = Span{ctx_start + at, ctx_start + at + k - 1};
      }
    }
    if (!ok) {
      throw GenerationError("generate_dataset: example " + std::to_string(e) +
                            " not placeable in " + std::to_string(kMaxTries) +
                            " tries; vocabulary too small for these lengths");
    }
    SpanExample ex;
    ex.tokens.reserve(p.seq_len);
    ex.tokens.push_back(kClsToken);
    ex.tokens.insert(ex.tokens.end(), needle.begin(), needle.end());
    ex.tokens.push_back(kSepToken);
    ex.tokens.insert(ex.tokens.end(), context.begin(), context.end());
    ex.segments.assign(p.seq_len, 1);
    std::fill_n(ex.segments.begin(), ctx_start, 0);
    ex.gold = null_answer ? kNoAnswer : gold;
    out.push_back(std::move(ex));
  }
  return out;
}

/// Best (s, e) with 1 <= s <= e < L and e - s < max_answer_len by
/// start[s] + end[e]; (0, 0) when the null score start[0] + end[0] is at
/// least as large. Ties go to the earlier start, then the shorter span.
inline SpanPrediction decode_span(std::span<const double> start_logits,
                                  std::span<const double> end_logits,
                                  std::size_t max_answer_len = kDefaultMaxAnswerLen) {
  if (start_logits.empty() || start_logits.size() != end_logits.size()) {
    throw std::invalid_argument("decode_span: logits must be non-empty and equal length");
  }
  const std::size_t len = start_logits.size();
  SpanPrediction pred;
  pred.start_logits.assign(start_logits.begin(), start_logits.end());
  pred.end_logits.assign(end_logits.begin(), end_logits.end());

  bool found = false;
  double best = 0.0;
  Span best_span = kNoAnswer;
  for (std::size_t s = 1; s < len; ++s) {
    const std::size_t last = std::min(len - 1, s + max_answer_len - 1);
    for (std::size_t e = s; e <= last && max_answer_len > 0; ++e) {
      const double v = start_logits[s] + end_logits[e];
      if (!found || v > best) {
        best = v;
        best_span = {s, e};
        found = true;
      }
    }
  }
  const double null_score = start_logits[0] + end_logits[0];
  if (!found || null_score >= best) {
    pred.span = kNoAnswer;
    pred.score = null_score;
  } else {
    pred.span = best_span;
    pred.score = best;
  }
  return pred;
}

/// Fraction in [0, 1].
struct Fraction {
  double value = 0.0;
};

/// Percentage in [0, 100].
class Percent {
 public:
  explicit Percent(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 100.0)) {
      throw std::invalid_argument("Percent: " + std::to_string(v) +
                                  " is outside the 0-100 scale");
    }
  }
  explicit Percent(Fraction f) : Percent(f.value * 100.0) {}
  double value() const { return value_; }

 private:
  double value_;
};

struct Scores {
  Fraction exact_match;
  Fraction f1;
};

/// Token-position F1 of one prediction against one gold span.
inline double span_f1(Span pred, Span gold) {
  if (gold.is_null() || pred.is_null()) return pred == gold ? 1.0 : 0.0;
  const std::size_t lo = std::max(pred.start, gold.start);
  const std::size_t hi = std::min(pred.end, gold.end);
  if (lo > hi) return 0.0;
  const double overlap = static_cast<double>(hi - lo + 1);
  const double precision = overlap / static_cast<double>(pred.length());
  const double recall = overlap / static_cast<double>(gold.length());
  return 2.0 * precision * recall / (precision + recall);
}

inline Scores score(std::span<const Span> predictions, std::span<const Span> golds) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("score: prediction and gold counts differ");
  }
  if (predictions.empty()) return {};
  double em = 0.0, f1 = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    em += predictions[i] == golds[i] ? 1.0 : 0.0;
    f1 += span_f1(predictions[i], golds[i]);
  }
  const double n = static_cast<double>(predictions.size());
  return {Fraction{em / n}, Fraction{f1 / n}};
}

/// Dataset text format, one example per line:
///   <token ids, space separated> TAB <segment ids> TAB <start> <end>
inline void save_dataset(std::ostream& out, const std::vector<SpanExample>& data) {
  auto ids = [&](const std::vector<std::size_t>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  };
  for (const auto& ex : data) {
    ids(ex.tokens);
    out << '\t';
    ids(ex.segments);
    out << '\t' << ex.gold.start << ' ' << ex.gold.end << '\n';
  }
}

inline std::vector<SpanExample> load_dataset(std::istream& in) {
  std::vector<SpanExample> data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() != 3) {
      throw std::runtime_error("load_dataset: line " + std::to_string(lineno) +
                               ": expected 3 tab-separated fields");
    }
    auto parse_ids = [](const std::string& s) {
      std::vector<std::size_t> v;
      std::stringstream in(s);
      for (std::size_t x; in >> x;) v.push_back(x);
      return v;
    };
    SpanExample ex;
    ex.tokens = parse_ids(fields[0]);
    ex.segments = parse_ids(fields[1]);
    auto span = parse_ids(fields[2]);
    if (span.size() != 2 || ex.tokens.size() != ex.segments.size()) {
      throw std::runtime_error("load_dataset: line " + std::to_string(lineno) +
                               ": malformed record");
    }
    ex.gold = {span[0], span[1]};
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace bertpe
