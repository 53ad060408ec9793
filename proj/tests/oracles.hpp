// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations shared by the unit tests and the acceptance
// runner. None of them touch the tape.

#pragma once

#include <bertpe/model.hpp>
#include <bertpe/span_task.hpp>

#include <algorithm>
#include <random>
#include <vector>

namespace bertpe::oracle {

using ops::Padding;

// Independent sliding-window reference: pads explicitly, then slides.
inline std::vector<double> conv1d_oracle(const ValueGrid& x, const ValueGrid& f, Padding padding) {
  const std::size_t len = x.shape[0], ch = x.shape[1];
  const std::size_t nk = f.shape[0], w = f.shape[1];
  std::size_t left = 0, right = 0;
  if (padding == Padding::same) {
    left = (w - 1) / 2;
    right = w - 1 - left;
  }
  std::vector<std::vector<double>> padded(len + left + right, std::vector<double>(ch, 0.0));
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) padded[t + left][c] = x.data[t * ch + c];
  const std::size_t out_len = padded.size() - w + 1;
  std::vector<double> out(out_len * nk);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < nk; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        // Padded rows contribute nothing; skip them so rounding matches a
        // sum over real rows only.
        if (t + j < left || t + j >= left + len) continue;
        for (std::size_t c = 0; c < ch; ++c) acc += f.data[(k * w + j) * ch + c] * padded[t + j][c];
      }
      out[t * nk + k] = acc;
    }
  }
  return out;
}

// Exhaustive pair search, written independently of decode_span: collect all
// candidates, then pick by (score desc, start asc, length asc).
inline Span decode_oracle(const std::vector<double>& s, const std::vector<double>& e,
                   std::size_t max_len) {
  struct Cand {
    double score;
    std::size_t start, end;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 1; i < s.size(); ++i)
    for (std::size_t j = i; j < s.size(); ++j)
      if (j - i < max_len) cands.push_back({s[i] + e[j], i, j});
  const double null_score = s[0] + e[0];
  if (cands.empty()) return kNoAnswer;
  auto best = *std::min_element(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  return null_score >= best.score ? kNoAnswer : Span{best.start, best.end};
}

using Matrix = std::vector<std::vector<double>>;  // [rows][cols]

// Reference pipeline on plain nested vectors, written step by step with
// none of the tape ops. Loop nesting matches the accumulation order of the
// production convolution (position, filter, tap, channel) so results agree
// to the bit.
inline Matrix ref_conv(const Matrix& x, const std::vector<Matrix>& filters, bool same) {
  const long len = static_cast<long>(x.size());
  const long w = static_cast<long>(filters.at(0).size());
  const long left = same ? (w - 1) / 2 : 0;
  const long out_len = same ? len : len - w + 1;
  Matrix out(out_len, std::vector<double>(filters.size(), 0.0));
  for (long t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < filters.size(); ++k) {
      double acc = 0.0;
      for (long j = 0; j < w; ++j) {
        const long src = t + j - left;
        if (src < 0 || src >= len) continue;
        for (std::size_t c = 0; c < x[src].size(); ++c) acc += filters[k][j][c] * x[src][c];
      }
      out[t][k] = acc;
    }
  }
  return out;
}

inline std::vector<Matrix> unflatten_filters(const std::vector<double>& flat, std::size_t k,
                                      std::size_t w, std::size_t c) {
  std::vector<Matrix> f(k, Matrix(w, std::vector<double>(c)));
  std::size_t i = 0;
  for (auto& fk : f)
    for (auto& row : fk)
      for (double& v : row) v = flat[i++];
  return f;
}

struct RefParams {
  std::vector<double> initial, initial_bias, context, context_bias;
};

inline Matrix ref_initial_maps(const Matrix& x, const RefParams& p, const CacnnConfig& c) {
  Matrix maps = ref_conv(
      x, unflatten_filters(p.initial, c.initial_filters, c.initial_width, x[0].size()), true);
  for (auto& row : maps)
    for (std::size_t f = 0; f < row.size(); ++f) {
      row[f] += p.initial_bias[f];
      if (c.stage_relu && row[f] < 0.0) row[f] = 0.0;
    }
  return maps;
}

inline Matrix ref_second_stage(const Matrix& x, const std::vector<double>& pool,
                        const CacnnConfig& c) {
  const std::size_t hidden = x[0].size();
  std::vector<double> flat(c.sample_filters * c.sample_width * hidden);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = pool[i % pool.size()];
  return ref_conv(x, unflatten_filters(flat, c.sample_filters, c.sample_width, hidden), true);
}

inline Matrix ref_context_vector(const Matrix& x, const RefParams& p, const CacnnConfig& c) {
  Matrix maps = ref_initial_maps(x, p, c);
  Matrix signal(c.initial_filters, std::vector<double>(1));
  for (std::size_t f = 0; f < c.initial_filters; ++f) {
    double v = c.reduction == LengthReduction::max ? maps[0][f] : 0.0;
    for (std::size_t t = 0; t < maps.size(); ++t) {
      if (c.reduction == LengthReduction::max) {
        if (maps[t][f] > v) v = maps[t][f];
      } else {
        v += maps[t][f];
      }
    }
    signal[f][0] = v;
  }
  Matrix ctx = ref_conv(
      signal, unflatten_filters(p.context, c.context_filters, c.context_width, 1), false);
  std::vector<double> pool;
  for (auto& row : ctx)
    for (std::size_t m = 0; m < row.size(); ++m) pool.push_back(row[m] + p.context_bias[m]);
  return ref_second_stage(x, pool, c);
}

inline Matrix ref_simplified(const Matrix& x, const RefParams& p, const CacnnConfig& c) {
  Matrix maps = ref_initial_maps(x, p, c);
  std::vector<double> pool;
  for (auto& row : maps) pool.insert(pool.end(), row.begin(), row.end());
  return ref_second_stage(x, pool, c);
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

struct CacnnComparison {
  Matrix expected;  // reference pipeline
  Matrix actual;    // production head body
};

// Runs the production head body and the reference on the same random data.
inline CacnnComparison compare_cacnn(const CacnnConfig& c, std::size_t len, std::size_t hidden,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix x(len, std::vector<double>(hidden));
  for (auto& row : x) row = random_values(hidden, rng);
  RefParams rp;
  rp.initial = random_values(c.initial_filters * c.initial_width * hidden, rng);
  rp.initial_bias = random_values(c.initial_filters, rng);
  if (c.variant == CacnnVariant::context_vector) {
    rp.context = random_values(c.context_filters * c.context_width, rng);
    rp.context_bias = random_values(c.context_filters, rng);
  }
  const Matrix expected = c.variant == CacnnVariant::context_vector
                              ? ref_context_vector(x, rp, c)
                              : ref_simplified(x, rp, c);

  Tape t;
  std::vector<double> xf;
  for (auto& row : x) xf.insert(xf.end(), row.begin(), row.end());
  CacnnParams p;
  p.initial_filters = t.constant(ValueGrid({c.initial_filters, c.initial_width, hidden}, rp.initial));
  p.initial_bias = t.constant(ValueGrid({c.initial_filters}, rp.initial_bias));
  if (c.variant == CacnnVariant::context_vector) {
    p.context_filters = t.constant(ValueGrid({c.context_filters, c.context_width, 1}, rp.context));
    p.context_bias = t.constant(ValueGrid({c.context_filters}, rp.context_bias));
  }
  Var y = cacnn_features(t.constant(ValueGrid({len, hidden}, xf)), p, c);
  CacnnComparison out{expected, Matrix(y.shape()[0], std::vector<double>(y.shape()[1]))};
  for (std::size_t i = 0; i < out.actual.size(); ++i)
    for (std::size_t k = 0; k < out.actual[i].size(); ++k) out.actual[i][k] = y.value()(i, k);
  return out;
}

}  // namespace bertpe::oracle
