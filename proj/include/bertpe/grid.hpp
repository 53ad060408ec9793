// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-dimensional arrays of doubles in row-major order.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bertpe {

using Shape = std::vector<std::size_t>;

/// Raised whenever operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// A shaped buffer of doubles with an optional gradient slot.
///
/// Invariants: every dimension is positive, `data.size() == numel(shape)`,
/// and `grad`, when engaged, has the same length as `data`.
struct ValueGrid {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;

  ValueGrid() = default;

  explicit ValueGrid(Shape s, double fill = 0.0) : shape(std::move(s)) {
    check_dims();
    data.assign(numel(shape), fill);
  }

  ValueGrid(Shape s, std::vector<double> values)
      : shape(std::move(s)), data(std::move(values)) {
    check_dims();
    if (data.size() != numel(shape)) {
      throw ShapeError("ValueGrid: shape " + to_string(shape) + " needs " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  static ValueGrid vector(std::initializer_list<double> values) {
    return ValueGrid({values.size()}, std::vector<double>(values));
  }

  static ValueGrid matrix(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ValueGrid::matrix: ragged rows");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return ValueGrid({r, c}, std::move(flat));
  }

  /// Row-major values for an r×c matrix.
  static ValueGrid matrix(std::size_t r, std::size_t c, std::vector<double> flat) {
    return ValueGrid({r, c}, std::move(flat));
  }

  static ValueGrid scalar(double v) { return ValueGrid({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  double& operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape) {
      if (d == 0) {
        throw ShapeError("ValueGrid: zero-length dimension in " +
                         to_string(shape));
      }
    }
  }
};

}  // namespace bertpe
