// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "afanet/graph.hpp"

namespace afanet {

/// Seeded generator used for every random draw in the project.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  float uniform(float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(engine_);
  }
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    return std::normal_distribution<float>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  Tensor uniform_tensor(Shape shape, float lo, float hi);
  Tensor normal_tensor(Shape shape, float stddev);

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream label so that independent consumers
/// (initialization, sampling, rendering) never share a sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Named parameter tensors, ordered by name.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t total_elements() const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  /// Adds a conv weight (He-uniform) and zero bias under `<name>.w` / `<name>.b`.
  void add_conv(const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
                Rng& rng);

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.tensors_ == b.tensors_;
  }

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Exposes ParamStore entries as graph leaves, created on first use.
/// Names matching a frozen prefix are bound as constants.
class ParamBinder {
 public:
  ParamBinder(Graph& g, const ParamStore& store, bool trainable,
              std::vector<std::string> frozen_prefixes = {})
      : graph_(g), store_(store), trainable_(trainable), frozen_(std::move(frozen_prefixes)) {}

  Var operator()(const std::string& name);
  /// Binds `name` to an existing graph value instead of a fresh leaf.
  void bind(const std::string& name, Var v) { bound_[name] = v; }
  Graph& graph() { return graph_; }
  const Graph& graph() const { return graph_; }
  const std::map<std::string, Var>& bound() const { return bound_; }
  bool is_frozen(const std::string& name) const;

 private:
  Graph& graph_;
  const ParamStore& store_;
  bool trainable_;
  std::vector<std::string> frozen_;
  std::map<std::string, Var> bound_;
};

}  // namespace afanet
