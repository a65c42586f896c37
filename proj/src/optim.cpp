// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/optim.hpp"

#include <cmath>

namespace afanet {

double Sgd::step(ParamStore& store, const ParamBinder& binder) {
  const Graph& g = binder.graph();
  double sq = 0.0;
  for (const auto& [name, var] : binder.bound()) {
    if (!g.requires_grad(var)) continue;
    const Tensor grad = g.grad(var);
    for (float x : grad.data()) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  const float factor =
      clip_norm_ > 0.0f && norm > clip_norm_ ? static_cast<float>(clip_norm_ / norm) : 1.0f;
  for (const auto& [name, var] : binder.bound()) {
    if (!g.requires_grad(var)) continue;
    const Tensor grad = g.grad(var);
    Tensor& w = store.get(name);
    auto [it, fresh] = velocity_.try_emplace(name, Tensor::zeros(w.shape()));
    Tensor& v = it->second;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      v[i] = momentum_ * v[i] + factor * grad[i];
      w[i] -= lr_ * v[i];
    }
  }
  return norm;
}

}  // namespace afanet
