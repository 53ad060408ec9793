// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape. Every operation appends one node holding its output
// grid and a backward rule; backward() replays the nodes in reverse order.

#pragma once

#include <bertpe/grid.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bertpe {

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const ValueGrid& value() const;
  const Shape& shape() const { return value().shape; }
  std::span<const double> data() const;
  bool requires_grad() const;
};

class Tape {
 public:
  /// Accumulates the node's input gradients given the node's own output
  /// grid and its gradient.
  using BackwardRule =
      std::function<void(Tape&, const ValueGrid&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(ValueGrid value, bool requires_grad = true) {
    value.requires_grad = requires_grad;
    value.grad.reset();
    nodes_.push_back(Node{std::move(value), true, {}});
    return Var{this, nodes_.size() - 1};
  }

  Var constant(ValueGrid value) { return leaf(std::move(value), false); }

  /// Appends an operation output. The rule is dropped when no input needs a
  /// gradient, so inference-only tapes carry no closures.
  Var record(ValueGrid out, std::initializer_list<Var> inputs,
             BackwardRule rule) {
    return record(std::move(out), std::span<const Var>(inputs.begin(),
                                                        inputs.size()),
                  std::move(rule));
  }

  Var record(ValueGrid out, std::span<const Var> inputs, BackwardRule rule) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::logic_error("Tape: foreign variable");
      needs = needs || nodes_[v.id].value.requires_grad;
    }
    out.requires_grad = needs;
    out.grad.reset();
    nodes_.push_back(Node{std::move(out), false,
                          needs ? std::move(rule) : BackwardRule{}});
    return Var{this, nodes_.size() - 1};
  }

  const ValueGrid& value(std::size_t id) const { return nodes_.at(id).value; }
  const ValueGrid& value(Var v) const { return value(v.id); }

  bool requires_grad(std::size_t id) const {
    return nodes_.at(id).value.requires_grad;
  }

  /// Gradient buffer for `id`, allocated on first use. Empty when the node
  /// does not require a gradient.
  std::span<double> grad_sink(std::size_t id) {
    ValueGrid& v = nodes_.at(id).value;
    if (!v.requires_grad) return {};
    if (!v.grad) v.grad.emplace(v.data.size(), 0.0);
    return *v.grad;
  }

  /// Accumulated gradient; all zeros when nothing has reached the node.
  std::vector<double> grad(Var v) const {
    const ValueGrid& g = value(v);
    if (g.grad) return *g.grad;
    return std::vector<double>(g.data.size(), 0.0);
  }

  /// Seeds a single-element root with 1 and propagates.
  void backward(Var root) {
    if (value(root).size() != 1) {
      throw ShapeError("Tape::backward: root " + to_string(root.shape()) +
                       " is not a scalar; pass an explicit seed");
    }
    const double one = 1.0;
    backward(root, std::span<const double>(&one, 1));
  }

  /// Propagates `seed` from `root`. Leaf gradients accumulate across calls;
  /// interior gradients are cleared first so each call is independent.
  void backward(Var root, std::span<const double> seed) {
    if (seed.size() != value(root).size()) {
      throw ShapeError("Tape::backward: seed length mismatch");
    }
    for (Node& n : nodes_) {
      if (!n.is_leaf) n.value.grad.reset();
    }
    if (!requires_grad(root.id)) return;
    auto sink = grad_sink(root.id);
    for (std::size_t i = 0; i < seed.size(); ++i) sink[i] += seed[i];
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.rule || !n.value.grad) continue;
      // The rule may touch other nodes' buffers but never this one.
      const std::vector<double>& out_grad = *n.value.grad;
      n.rule(*this, n.value, out_grad);
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.value.grad.reset();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    ValueGrid value;
    bool is_leaf = false;
    BackwardRule rule;
  };

  std::vector<Node> nodes_;
};

inline const ValueGrid& Var::value() const { return tape->value(id); }
inline std::span<const double> Var::data() const { return value().data; }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

}  // namespace bertpe
