// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "afanet/params.hpp"

namespace afanet {

/// SGD with heavy-ball momentum: v = mu * v + grad; w -= lr * v.
/// With clip_norm > 0 the gradient is first rescaled so that its global L2
/// norm over all updated parameters is at most clip_norm.
class Sgd {
 public:
  Sgd(float lr, float momentum, float clip_norm = 0.0f)
      : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {}

  /// Updates every parameter bound in `binder` that received a gradient in
  /// the binder's graph. Frozen and constant parameters are skipped.
  /// Returns the gradient norm before clipping.
  double step(ParamStore& store, const ParamBinder& binder);

 private:
  float lr_;
  float momentum_;
  float clip_norm_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace afanet
