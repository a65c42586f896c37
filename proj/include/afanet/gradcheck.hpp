// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "afanet/graph.hpp"

namespace afanet {

/// Builds a scalar (single-element) value from graph leaves bound to `inputs`.
using ScalarFn = std::function<Var(Graph& g, std::span<const Var> inputs)>;

struct GradCheckOptions {
  float step = 1e-3f;
  float rel_tol = 1e-2f;
  /// Coordinates probed per input; 0 probes all of them. Larger inputs are
  /// subsampled with a fixed stride so runs are reproducible.
  std::size_t max_coords_per_input = 0;
  /// Normalize every input by at least the infinity norm of the whole
  /// gradient, so inputs with tiny gradients are not judged on rounding noise.
  bool full_gradient_scale = true;
};

struct GradCheckInput {
  float max_rel_error = 0.0f;
  /// max_i |analytic_i - numeric_i|, before normalization.
  float max_abs_error = 0.0f;
  /// Gradient scale used for normalization.
  float scale = 0.0f;
  std::size_t probed = 0;
  /// Coordinates where one-sided differences disagree (relu/max kinks).
  std::size_t kinks = 0;
};

struct GradCheckReport {
  std::vector<GradCheckInput> inputs;
  bool finite = true;
  bool passed = false;
  std::string message;

  float max_rel_error() const;
};

/// Compares reverse-mode gradients with central finite differences.
///
/// Per input, the relative error is max_i |a_i - n_i| / s where s is the
/// larger of the analytic and numeric infinity norms (floored at 1e-6), taken
/// over all inputs when full_gradient_scale is set and over the input alone
/// otherwise. At a
/// coordinate whose forward and backward one-sided slopes differ by more than
/// rel_tol * s the function is treated as non-differentiable there, and the
/// analytic value only has to fall between the two one-sided slopes.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace afanet
