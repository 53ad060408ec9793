// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bertpe/grid.hpp>

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bertpe {

/// One named model parameter. `values` is empty for layout-only registries,
/// which carry shapes for counting but no weights.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool trainable = true;

  std::uint64_t count() const { return numel(shape); }
  bool materialized() const { return values.size() == numel(shape); }
};

struct TrainableSummary {
  std::vector<std::string> names;  // trainable entries, registry order
  std::uint64_t total_count = 0;
  std::uint64_t trainable_count = 0;
};

/// Ordered name -> parameter collection; iteration follows insertion order.
class ParameterRegistry {
 public:
  Parameter& add(std::string name, Shape shape, std::vector<double> values = {},
                 bool trainable = true) {
    if (index_.contains(name)) {
      throw std::invalid_argument("ParameterRegistry: duplicate name " + name);
    }
    if (!values.empty() && values.size() != numel(shape)) {
      throw ShapeError("ParameterRegistry: " + name + " has shape " +
                       to_string(shape) + " but " +
                       std::to_string(values.size()) + " values");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(
        Parameter{std::move(name), std::move(shape), std::move(values), trainable});
    return entries_.back();
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Parameter& at(const std::string& name) { return entries_[lookup(name)]; }
  const Parameter& at(const std::string& name) const {
    return entries_[lookup(name)];
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (const auto& p : entries_) n += p.count();
    return n;
  }

  std::uint64_t trainable_count() const {
    std::uint64_t n = 0;
    for (const auto& p : entries_)
      if (p.trainable) n += p.count();
    return n;
  }

  std::uint64_t frozen_count() const { return total_count() - trainable_count(); }

  TrainableSummary trainable_parameters() const {
    TrainableSummary s;
    for (const auto& p : entries_) {
      s.total_count += p.count();
      if (p.trainable) {
        s.trainable_count += p.count();
        s.names.push_back(p.name);
      }
    }
    return s;
  }

  bool materialized() const {
    for (const auto& p : entries_)
      if (!p.materialized()) return false;
    return true;
  }

  /// Text checkpoint: one line per parameter,
  /// `name<TAB>d0xd1...<TAB>trainable(0|1)<TAB>v0 v1 ...` with values in
  /// shortest round-trip decimal form.
  void save(std::ostream& out) const {
    for (const auto& p : entries_) {
      if (!p.materialized()) {
        throw std::logic_error("ParameterRegistry::save: " + p.name +
                               " has no values");
      }
      out << p.name << '\t';
      for (std::size_t i = 0; i < p.shape.size(); ++i)
        out << (i ? "x" : "") << p.shape[i];
      out << '\t' << (p.trainable ? 1 : 0) << '\t';
      char buf[32];
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        auto res = std::to_chars(buf, buf + sizeof buf, p.values[i]);
        if (i) out << ' ';
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    }
  }

  static ParameterRegistry load(std::istream& in) {
    ParameterRegistry reg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto fail = [&](const std::string& why) {
        return std::runtime_error("ParameterRegistry::load: line " +
                                  std::to_string(lineno) + ": " + why);
      };
      std::vector<std::string> fields;
      std::stringstream ss(line);
      for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
      if (fields.size() != 4) throw fail("expected 4 tab-separated fields");
      Shape shape;
      std::stringstream dims(fields[1]);
      for (std::string d; std::getline(dims, d, 'x');) {
        std::size_t v = 0;
        auto r = std::from_chars(d.data(), d.data() + d.size(), v);
        if (r.ec != std::errc{} || v == 0) throw fail("bad shape " + fields[1]);
        shape.push_back(v);
      }
      if (fields[2] != "0" && fields[2] != "1") throw fail("bad trainable flag");
      std::vector<double> values;
      values.reserve(numel(shape));
      const char* p = fields[3].data();
      const char* end = p + fields[3].size();
      while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0;
        auto r = std::from_chars(p, end, v);
        if (r.ec != std::errc{}) throw fail("bad value");
        values.push_back(v);
        p = r.ptr;
      }
      if (values.size() != numel(shape)) throw fail("value count mismatch");
      reg.add(fields[0], shape, std::move(values), fields[2] == "1");
    }
    return reg;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("ParameterRegistry: no parameter named " + name);
    }
    return it->second;
  }

  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace bertpe
