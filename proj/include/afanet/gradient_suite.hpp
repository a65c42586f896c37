// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference checks over every differentiable op and the composed
// modules, on random inputs in [-1, 1].

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afanet/gradcheck.hpp"

namespace afanet {

struct GradientCase {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

struct GradientSuiteOptions {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
  float rel_tol = 1e-2f;
  /// Include the composed cases (CFM at 3x64x64, adapter, head, episode loss).
  bool composed = true;
};

std::vector<std::string> gradient_case_names(bool composed = true);

std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options);

}  // namespace afanet
