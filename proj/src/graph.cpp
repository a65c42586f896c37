// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/graph.hpp"

namespace afanet {

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs)
    if (in.valid() && node(in).requires_grad) needs = true;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw_invalid("graph: invalid variable handle");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw_invalid("graph: invalid variable handle");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor::zeros(n.value.shape());
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& delta) {
  if (!v.valid() || !node(v).requires_grad) return;
  Tensor& buf = grad_buffer(v);
  if (buf.shape() != delta.shape())
    throw Error(ErrorCode::kInternal, "gradient shape mismatch " + shape_str(buf.shape()) +
                                          " vs " + shape_str(delta.shape()));
  auto dst = buf.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::size_t Graph::backward(Var target) {
  Node& t = node(target);
  if (t.value.numel() != 1) throw_shape("backward target must be a single element, got " +
                                        shape_str(t.value.shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!t.requires_grad) return 0;
  grad_buffer(target).fill(1.0f);
  std::size_t replayed = 0;
  for (std::size_t i = target.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.has_grad) continue;
    // Closures only write to buffers of earlier nodes.
    n.backward(*this, Var{static_cast<std::uint32_t>(i)}, n.grad);
    ++replayed;
  }
  return replayed;
}

}  // namespace afanet
