// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "afanet/tensor.hpp"

namespace afanet {

/// Handle to a value recorded in a Graph.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

class Graph;

/// Propagates the output gradient of one recorded node into its inputs.
using BackwardFn = std::function<void(Graph& g, Var self, const Tensor& out_grad)>;

/// Tape of executed operations. Nodes are appended in execution order, so a
/// reverse sweep over the tape is a valid topological replay. Nodes whose
/// inputs never require a gradient store no backward closure; a graph built
/// only from constant leaves therefore runs as plain inference.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an operation output. `fn` is dropped when no input requires grad.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const;

  /// Gradient of the last backward() target with respect to `v`. All zeros if
  /// `v` is not on any path to that target.
  Tensor grad(Var v) const;

  /// Adds `delta` into the gradient buffer of `v` (no-op for constants).
  void accumulate(Var v, const Tensor& delta);
  /// Mutable gradient buffer of `v`, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);

  /// Seeds d(target)/d(target) = 1 for a single-element target and replays the
  /// tape in reverse. Returns the number of backward closures executed.
  std::size_t backward(Var target);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;  // stable references while the tape grows
};

// Differentiable operations. All maps are C×H×W unless noted; no broadcasting.
namespace ops {

Var conv2d(Graph& g, Var input, Var weight, Var bias, int stride, int padding);
Var avg_pool2(Graph& g, Var input);
Var max_pool2(Graph& g, Var input);
Var bilinear_resize(Graph& g, Var input, std::size_t out_h, std::size_t out_w);
Var relu(Graph& g, Var input);
Var sigmoid(Graph& g, Var input);
Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, float factor);
Var linear(Graph& g, Var input, Var weight, Var bias);
Var concat_channels(Graph& g, std::span<const Var> parts);
Var slice_channels(Graph& g, Var input, std::size_t begin, std::size_t count);
Var max_normalize(Graph& g, Var input);
Var reshape(Graph& g, Var input, Shape shape);
/// Repeats a 1×H×W map over `channels` channels.
Var broadcast_channels(Graph& g, Var input, std::size_t channels);
/// Σ_c w_c · F_c for F: C×H×W, w: [C]; returns 1×H×W.
Var channel_weighted_sum(Graph& g, Var features, Var weights);
/// Mean over H×W per channel: C×H×W -> [C].
Var global_avg_pool(Graph& g, Var features);
/// Σ_xy m·F / (Σ_xy m + eps) per channel: (C×H×W, 1×H×W) -> [C].
Var masked_avg_pool(Graph& g, Var features, Var mask);
/// Cosine similarity of every spatial feature column with `proto`: -> 1×H×W.
Var cosine_map(Graph& g, Var features, Var proto);
/// Concatenates rank-1 tensors.
Var concat_vectors(Graph& g, std::span<const Var> parts);
Var dot(Graph& g, Var a, Var b);
Var sum(Graph& g, Var input);
Var mean(Graph& g, Var input);
/// Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7].
Var bce(Graph& g, Var pred, Var target);
Var softmax_cross_entropy(Graph& g, Var logits, std::size_t target);

inline constexpr float kMaxNormalizeEps = 1e-8f;
inline constexpr float kBceClamp = 1e-7f;

}  // namespace ops

// Plain-tensor forward kernels shared by the graph ops and by callers that do
// not need gradients.
namespace kernels {
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias, int stride,
              int padding);
Tensor avg_pool2(const Tensor& input);
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor max_normalize(const Tensor& input);
}  // namespace kernels

}  // namespace afanet
