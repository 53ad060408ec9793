// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations recorded on a Tape. Every op validates shapes up
// front and throws ShapeError naming the offending shapes.

#pragma once

#include <bertpe/tape.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace bertpe::ops {

enum class Padding { same, valid };

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void require_rank(const Var& v, std::size_t rank, const char* op) {
  require(v.shape().size() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) +
              ", got " + to_string(v.shape()));
}

inline void require_same(const Var& a, const Var& b, const char* op) {
  require(a.tape == b.tape, std::string(op) + ": operands on different tapes");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

// A shape seen as (outer, axis length, inner) around one axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis, const char* op) {
  require(axis < s.size(), std::string(op) + ": axis " + std::to_string(axis) +
                               " out of range for " + to_string(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

// Elementwise op; `f` returns (value, derivative) for one input.
template <class F>
Var unary(Var x, F&& f) {
  const ValueGrid& in = x.value();
  ValueGrid out(in.shape);
  std::vector<double> deriv(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto [y, dy] = f(in.data[i]);
    out.data[i] = y;
    deriv[i] = dy;
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x},
                        [xi, deriv = std::move(deriv)](
                            Tape& t, const ValueGrid&, std::span<const double> g) {
                          auto gx = t.grad_sink(xi);
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            gx[i] += g[i] * deriv[i];
                        });
}

inline void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

/// C[m×n] = A[m×k] · B[k×n].
inline Var matmul(Var a, Var b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  detail::require(b.shape()[0] == k, "matmul: inner dimensions disagree, " +
                                         to_string(a.shape()) + " x " +
                                         to_string(b.shape()));
  const auto& A = a.value().data;
  const auto& B = b.value().data;
  ValueGrid out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.data[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi, m, k, n](Tape& t, const ValueGrid&, std::span<const double> g) {
        const auto& A = t.value(ai).data;
        const auto& B = t.value(bi).data;
        // dA = dC · Bᵀ
        if (auto ga = t.grad_sink(ai); !ga.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = &g[i * n];
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = &B[p * n];
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        // dB = Aᵀ · dC
        if (auto gb = t.grad_sink(bi); !gb.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = &g[i * n];
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              double* gbrow = &gb[p * n];
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  ValueGrid out(a.shape());
  const auto& A = a.value().data;
  const auto& B = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A[i] + B[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi](Tape& t, const ValueGrid&, std::span<const double> g) {
        detail::accumulate(t.grad_sink(ai), g);
        detail::accumulate(t.grad_sink(bi), g);
      });
}

/// Adds a length-n vector to every row of an [m×n] grid.
inline Var add_row(Var x, Var bias) {
  detail::require_rank(x, 2, "add_row");
  detail::require_rank(bias, 1, "add_row");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  detail::require(bias.shape()[0] == n, "add_row: bias " +
                                            to_string(bias.shape()) +
                                            " does not match " +
                                            to_string(x.shape()));
  ValueGrid out(x.shape());
  const auto& X = x.value().data;
  const auto& B = bias.value().data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data[i * n + j] = X[i * n + j] + B[j];
  const std::size_t xi = x.id, bi = bias.id;
  return x.tape->record(
      std::move(out), {x, bias},
      [xi, bi, m, n](Tape& t, const ValueGrid&, std::span<const double> g) {
        detail::accumulate(t.grad_sink(xi), g);
        if (auto gb = t.grad_sink(bi); !gb.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      });
}

inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  ValueGrid out(a.shape());
  const auto& A = a.value().data;
  const auto& B = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A[i] * B[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi](Tape& t, const ValueGrid&, std::span<const double> g) {
        const auto& A = t.value(ai).data;
        const auto& B = t.value(bi).data;
        if (auto ga = t.grad_sink(ai); !ga.empty())
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * B[i];
        if (auto gb = t.grad_sink(bi); !gb.empty())
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * A[i];
      });
}

inline Var scale(Var x, double factor) {
  return detail::unary(x, [factor](double v) {
    return std::pair{v * factor, factor};
  });
}

/// GELU, tanh approximation.
inline Var gelu(Var x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return detail::unary(x, [](double v) {
    const double th = std::tanh(c * (v + a * v * v * v));
    const double y = 0.5 * v * (1.0 + th);
    const double dy = 0.5 * (1.0 + th) +
                      0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * a * v * v);
    return std::pair{y, dy};
  });
}

inline Var relu(Var x) {
  return detail::unary(x, [](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

inline Var tanh(Var x) {
  return detail::unary(x, [](double v) {
    const double y = std::tanh(v);
    return std::pair{y, 1.0 - y * y};
  });
}

inline Var reshape(Var x, Shape shape) {
  detail::require(numel(shape) == x.value().size(),
                  "reshape: cannot view " + to_string(x.shape()) + " as " +
                      to_string(shape));
  ValueGrid out(std::move(shape), x.value().data);
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi](Tape& t, const ValueGrid&, std::span<const double> g) {
        detail::accumulate(t.grad_sink(xi), g);
      });
}

inline Var transpose(Var x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  ValueGrid out({n, m});
  const auto& X = x.value().data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = X[i * n + j];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, m, n](Tape& t, const ValueGrid&, std::span<const double> g) {
        auto gx = t.grad_sink(xi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
      });
}

/// Joins grids along `axis`; all other dimensions must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::axis_view(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    detail::require(p.tape == parts.front().tape,
                    "concat: operands on different tapes");
    Shape s = p.shape();
    detail::require(s.size() == first.size(), "concat: rank mismatch " +
                                                  to_string(s) + " vs " +
                                                  to_string(first));
    out_shape[axis] += s[axis];
    s[axis] = first[axis];
    detail::require(s == first, "concat: incompatible shapes " +
                                    to_string(p.shape()) + " and " +
                                    to_string(first));
  }
  const auto view = detail::axis_view(out_shape, axis, "concat");
  ValueGrid out(out_shape);
  std::vector<std::size_t> ids, lens;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t len = p.shape()[axis];
    const auto& src = p.value().data;
    for (std::size_t o = 0; o < view.outer; ++o)
      std::copy_n(&src[o * len * view.inner], len * view.inner,
                  &out.data[(o * view.len + offset) * view.inner]);
    ids.push_back(p.id);
    lens.push_back(len);
    offset += len;
  }
  return parts.front().tape->record(
      std::move(out), std::span<const Var>(parts),
      [ids, lens, view](Tape& t, const ValueGrid&, std::span<const double> g) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t len = lens[p];
          if (auto gp = t.grad_sink(ids[p]); !gp.empty()) {
            for (std::size_t o = 0; o < view.outer; ++o)
              for (std::size_t i = 0; i < len * view.inner; ++i)
                gp[o * len * view.inner + i] +=
                    g[(o * view.len + offset) * view.inner + i];
          }
          offset += len;
        }
      });
}

/// Cuts a grid along `axis` into consecutive pieces of the given sizes.
inline std::vector<Var> split(Var x, std::size_t axis,
                              const std::vector<std::size_t>& sizes) {
  const auto view = detail::axis_view(x.shape(), axis, "split");
  std::size_t total = 0;
  for (std::size_t s : sizes) {
    detail::require(s > 0, "split: zero-length piece");
    total += s;
  }
  detail::require(total == view.len,
                  "split: sizes sum to " + std::to_string(total) +
                      " but axis " + std::to_string(axis) + " of " +
                      to_string(x.shape()) + " has length " +
                      std::to_string(view.len));
  std::vector<Var> pieces;
  std::size_t offset = 0;
  for (std::size_t len : sizes) {
    Shape s = x.shape();
    s[axis] = len;
    ValueGrid out(s);
    const auto& src = x.value().data;
    for (std::size_t o = 0; o < view.outer; ++o)
      std::copy_n(&src[(o * view.len + offset) * view.inner], len * view.inner,
                  &out.data[o * len * view.inner]);
    const std::size_t xi = x.id;
    pieces.push_back(x.tape->record(
        std::move(out), {x},
        [xi, view, offset, len](Tape& t, const ValueGrid&,
                                std::span<const double> g) {
          auto gx = t.grad_sink(xi);
          for (std::size_t o = 0; o < view.outer; ++o)
            for (std::size_t i = 0; i < len * view.inner; ++i)
              gx[(o * view.len + offset) * view.inner + i] +=
                  g[o * len * view.inner + i];
        }));
    offset += len;
  }
  return pieces;
}

/// Gathers rows of `table` [V×H] by id, giving [L×H].
inline Var embedding_lookup(Var table, const std::vector<std::size_t>& ids) {
  detail::require_rank(table, 2, "embedding_lookup");
  detail::require(!ids.empty(), "embedding_lookup: empty id list");
  const std::size_t vocab = table.shape()[0], h = table.shape()[1];
  for (std::size_t id : ids) {
    if (id >= vocab)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " out of range for table " + to_string(table.shape()));
  }
  ValueGrid out({ids.size(), h});
  const auto& T = table.value().data;
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(&T[ids[r] * h], h, &out.data[r * h]);
  const std::size_t ti = table.id;
  return table.tape->record(
      std::move(out), {table},
      [ti, ids, h](Tape& t, const ValueGrid&, std::span<const double> g) {
        auto gt = t.grad_sink(ti);
        for (std::size_t r = 0; r < ids.size(); ++r)
          for (std::size_t j = 0; j < h; ++j) gt[ids[r] * h + j] += g[r * h + j];
      });
}

/// Softmax along `axis`, with max subtraction.
inline Var softmax(Var x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis, "softmax");
  const auto& X = x.value().data;
  ValueGrid out(x.shape());
  for (std::size_t o = 0; o < view.outer; ++o) {
    for (std::size_t in = 0; in < view.inner; ++in) {
      const std::size_t base = o * view.len * view.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < view.len; ++i)
        mx = std::max(mx, X[base + i * view.inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < view.len; ++i) {
        const double e = std::exp(X[base + i * view.inner] - mx);
        out.data[base + i * view.inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < view.len; ++i)
        out.data[base + i * view.inner] /= sum;
    }
  }
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, view](Tape& t, const ValueGrid& y, std::span<const double> g) {
        const auto& Y = y.data;
        auto gx = t.grad_sink(xi);
        for (std::size_t o = 0; o < view.outer; ++o) {
          for (std::size_t in = 0; in < view.inner; ++in) {
            const std::size_t base = o * view.len * view.inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < view.len; ++i)
              dot += g[base + i * view.inner] * Y[base + i * view.inner];
            for (std::size_t i = 0; i < view.len; ++i) {
              const std::size_t k = base + i * view.inner;
              gx[k] += Y[k] * (g[k] - dot);
            }
          }
        }
      });
}

/// Normalizes each row over the last axis (population variance), then
/// applies elementwise gain and bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12) {
  detail::require(x.shape().size() >= 1, "layer_norm: scalar input");
  const std::size_t h = x.shape().back();
  detail::require(gain.shape() == Shape{h} && bias.shape() == Shape{h},
                  "layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                      to_string(bias.shape()) + " do not match last axis of " +
                      to_string(x.shape()));
  const std::size_t rows = x.value().size() / h;
  const auto& X = x.value().data;
  const auto& G = gain.value().data;
  const auto& B = bias.value().data;
  ValueGrid out(x.shape());
  std::vector<double> xhat(X.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &X[r * h];
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += row[j];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      const double xn = (row[j] - mean) * inv;
      xhat[r * h + j] = xn;
      out.data[r * h + j] = xn * G[j] + B[j];
    }
  }
  const std::size_t xi = x.id, gi = gain.id, bi = bias.id;
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [xi, gi, bi, h, rows, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, const ValueGrid&,
                                     std::span<const double> g) {
        const auto& G = t.value(gi).data;
        if (auto gg = t.grad_sink(gi); !gg.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < h; ++j)
              gg[j] += g[r * h + j] * xhat[r * h + j];
        if (auto gb = t.grad_sink(bi); !gb.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < h; ++j) gb[j] += g[r * h + j];
        if (auto gx = t.grad_sink(xi); !gx.empty()) {
          const double hd = static_cast<double>(h);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
              const double d = g[r * h + j] * G[j];
              sum_d += d;
              sum_dx += d * xhat[r * h + j];
            }
            for (std::size_t j = 0; j < h; ++j) {
              const double d = g[r * h + j] * G[j];
              gx[r * h + j] +=
                  inv_std[r] / hd * (hd * d - sum_d - xhat[r * h + j] * sum_dx);
            }
          }
        }
      });
}

/// Output length of conv1d for a sequence of length `len` and width `width`.
inline std::size_t conv1d_output_length(std::size_t len, std::size_t width,
                                        Padding padding) {
  return padding == Padding::same ? len : len - width + 1;
}

/// Left zero-padding for "same" convolutions; the extra pad of an even
/// width goes on the right.
inline std::size_t same_left_pad(std::size_t width) { return (width - 1) / 2; }

/// Cross-correlation of x [L×C] with filters [K×w×C] along the sequence
/// axis, giving [L'×K].
inline Var conv1d(Var x, Var filters, Padding padding) {
  detail::require_rank(x, 2, "conv1d");
  detail::require_rank(filters, 3, "conv1d");
  const std::size_t len = x.shape()[0], ch = x.shape()[1];
  const std::size_t nk = filters.shape()[0], w = filters.shape()[1];
  detail::require(filters.shape()[2] == ch,
                  "conv1d: filter channels " + to_string(filters.shape()) +
                      " do not match input " + to_string(x.shape()));
  detail::require(padding == Padding::same || w <= len,
                  "conv1d: filter width " + std::to_string(w) +
                      " exceeds sequence length " + std::to_string(len) +
                      " with valid padding");
  const std::size_t out_len = conv1d_output_length(len, w, padding);
  const std::ptrdiff_t pad =
      padding == Padding::same ? static_cast<std::ptrdiff_t>(same_left_pad(w)) : 0;
  const auto& X = x.value().data;
  const auto& F = filters.value().data;
  ValueGrid out({out_len, nk});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < nk; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const double* xr = &X[static_cast<std::size_t>(src) * ch];
        const double* fr = &F[(k * w + j) * ch];
        for (std::size_t c = 0; c < ch; ++c) acc += fr[c] * xr[c];
      }
      out.data[t * nk + k] = acc;
    }
  }
  const std::size_t xi = x.id, fi = filters.id;
  return x.tape->record(
      std::move(out), {x, filters},
      [xi, fi, len, ch, nk, w, out_len, pad](Tape& t, const ValueGrid&,
                                             std::span<const double> g) {
        const auto& X = t.value(xi).data;
        const auto& F = t.value(fi).data;
        auto gx = t.grad_sink(xi);
        auto gf = t.grad_sink(fi);
        for (std::size_t s = 0; s < out_len; ++s) {
          for (std::size_t k = 0; k < nk; ++k) {
            const double go = g[s * nk + k];
            if (go == 0.0) continue;
            for (std::size_t j = 0; j < w; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s + j) - pad;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
              const std::size_t xo = static_cast<std::size_t>(src) * ch;
              const std::size_t fo = (k * w + j) * ch;
              if (!gx.empty())
                for (std::size_t c = 0; c < ch; ++c) gx[xo + c] += go * F[fo + c];
              if (!gf.empty())
                for (std::size_t c = 0; c < ch; ++c) gf[fo + c] += go * X[xo + c];
            }
          }
        }
      });
}

/// Column-wise maximum of [L×F], giving [F]. Gradient goes to the first
/// maximal row of each column.
inline Var max_reduce(Var x) {
  detail::require_rank(x, 2, "max_reduce");
  const std::size_t len = x.shape()[0], f = x.shape()[1];
  const auto& X = x.value().data;
  ValueGrid out({f});
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t j = 0; j < f; ++j) {
    double best = X[j];
    for (std::size_t i = 1; i < len; ++i) {
      if (X[i * f + j] > best) {
        best = X[i * f + j];
        arg[j] = i;
      }
    }
    out.data[j] = best;
  }
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, f, arg = std::move(arg)](Tape& t, const ValueGrid&,
                                    std::span<const double> g) {
        auto gx = t.grad_sink(xi);
        for (std::size_t j = 0; j < f; ++j) gx[arg[j] * f + j] += g[j];
      });
}

/// Column-wise sum of [L×F], giving [F].
inline Var sum_reduce(Var x) {
  detail::require_rank(x, 2, "sum_reduce");
  const std::size_t len = x.shape()[0], f = x.shape()[1];
  const auto& X = x.value().data;
  ValueGrid out({f});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < f; ++j) out.data[j] += X[i * f + j];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, len, f](Tape& t, const ValueGrid&, std::span<const double> g) {
        auto gx = t.grad_sink(xi);
        for (std::size_t i = 0; i < len; ++i)
          for (std::size_t j = 0; j < f; ++j) gx[i * f + j] += g[j];
      });
}

/// Sum of all entries, as a one-element grid.
inline Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  const std::size_t xi = x.id;
  return x.tape->record(
      ValueGrid::scalar(acc), {x},
      [xi](Tape& t, const ValueGrid&, std::span<const double> g) {
        auto gx = t.grad_sink(xi);
        for (double& v : gx) v += g[0];
      });
}

/// Flattens x and repeats it cyclically, truncated to exactly `count`
/// values. With count ≤ size this is a prefix.
inline Var tile_flat(Var x, std::size_t count) {
  detail::require(count > 0, "tile_flat: zero count");
  const auto& X = x.value().data;
  const std::size_t n = X.size();
  ValueGrid out({count});
  for (std::size_t i = 0; i < count; ++i) out.data[i] = X[i % n];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, n, count](Tape& t, const ValueGrid&, std::span<const double> g) {
        auto gx = t.grad_sink(xi);
        for (std::size_t i = 0; i < count; ++i) gx[i % n] += g[i];
      });
}

/// -log softmax(logits)[target], computed through log-sum-exp.
inline Var cross_entropy_from_logits(Var logits, std::size_t target) {
  const auto& Z = logits.value().data;
  detail::require(logits.shape().size() == 1,
                  "cross_entropy_from_logits: expected rank-1 logits, got " +
                      to_string(logits.shape()));
  detail::require(target < Z.size(), "cross_entropy_from_logits: target " +
                                         std::to_string(target) +
                                         " out of range for " +
                                         to_string(logits.shape()));
  const double mx = *std::max_element(Z.begin(), Z.end());
  double sum = 0.0;
  for (double z : Z) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  const std::size_t zi = logits.id;
  return logits.tape->record(
      ValueGrid::scalar(lse - Z[target]), {logits},
      [zi, target, lse](Tape& t, const ValueGrid&, std::span<const double> g) {
        const auto& Z = t.value(zi).data;
        auto gz = t.grad_sink(zi);
        for (std::size_t i = 0; i < gz.size(); ++i)
          gz[i] += g[0] * (std::exp(Z[i] - lse) - (i == target ? 1.0 : 0.0));
      });
}

}  // namespace bertpe::ops
