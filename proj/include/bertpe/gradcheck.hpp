// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checking of tape gradients.
//
// Each case maps input grids to an output grid. The checked scalar is
// f = Σ wᵢ·outᵢ with fixed random weights w, so ops whose outputs sum to a
// constant (softmax) still get a non-trivial check. The error reported for
// a case is ‖g_tape − g_fd‖∞ / max(‖g_tape‖∞, ‖g_fd‖∞) taken over all input
// gradients jointly, with the denominator floored at 1e-8. Joint scaling
// keeps inputs whose exact gradient is zero (attention key biases) from
// reporting roundoff as error.

#pragma once

#include <bertpe/tape.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bertpe {

struct GradCheckCase {
  using Build = std::function<Var(Tape&, std::span<const Var>)>;
  using MakeInput = std::function<ValueGrid(const Shape&, std::mt19937_64&)>;

  std::string name;
  std::vector<Shape> inputs;
  Build build;
  MakeInput make_input;  // optional; default is uniform(-1, 1)
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string detail;
};

inline ValueGrid uniform_grid(const Shape& s, std::mt19937_64& rng,
                              double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ValueGrid g(s);
  for (double& v : g.data) v = u(rng);
  return g;
}

/// Entries that are pairwise separated by at least 0.05, in random order.
inline ValueGrid distinct_grid(const Shape& s, std::mt19937_64& rng) {
  ValueGrid g(s);
  std::vector<std::size_t> perm(g.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < g.size(); ++i)
    g.data[i] = -1.0 + 0.05 * static_cast<double>(perm[i]);
  return g;
}

/// Uniform magnitudes in [0.1, 1] with random sign; keeps clear of kinks at 0.
inline ValueGrid away_from_zero_grid(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  ValueGrid g(s);
  for (double& v : g.data) v = sign(rng) ? mag(rng) : -mag(rng);
  return g;
}

inline GradCheckResult run_gradcheck(const GradCheckCase& c, std::uint64_t seed,
                                     double tolerance = 1e-4, double step = 1e-5) {
  GradCheckResult result{c.name, 0.0, false, {}};
  std::mt19937_64 rng(seed);
  std::vector<ValueGrid> inputs;
  for (const Shape& s : c.inputs)
    inputs.push_back(c.make_input ? c.make_input(s, rng) : uniform_grid(s, rng));

  std::vector<double> weights;
  auto objective = [&](const std::vector<ValueGrid>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.constant(x));
    Var out = c.build(tape, leaves);
    const auto& y = out.value().data;
    if (weights.empty()) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      weights.resize(y.size());
      for (double& w : weights) w = u(rng);
    }
    double f = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) f += weights[i] * y[i];
    return f;
  };
  objective(inputs);  // fixes the projection weights

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
  Var out = c.build(tape, leaves);
  if (!out.requires_grad()) {
    result.detail = "output does not depend on any input";
    return result;
  }
  tape.backward(out, weights);

  double diff = 0.0, scale = 0.0;
  std::size_t worst = 0;
  bool finite = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> analytic = tape.grad(leaves[k]);
    auto probe = inputs;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double orig = probe[k].data[i];
      probe[k].data[i] = orig + step;
      const double fp = objective(probe);
      probe[k].data[i] = orig - step;
      const double fm = objective(probe);
      probe[k].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double d = std::abs(analytic[i] - numeric);
      finite = finite && std::isfinite(d);
      if (!(d <= diff)) worst = k;
      diff = std::max(diff, d);
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
  }
  result.max_rel_error = diff / std::max(scale, 1e-8);
  if (!finite || !std::isfinite(result.max_rel_error)) {
    result.max_rel_error = std::numeric_limits<double>::infinity();
    result.detail = "non-finite gradient";
    return result;
  }
  result.detail = "largest deviation on input " + std::to_string(worst);
  result.passed = result.max_rel_error < tolerance;
  return result;
}

}  // namespace bertpe
