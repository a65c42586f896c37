// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used by unit and acceptance tests.
// They share nothing with the library kernels beyond the Tensor container.

#pragma once

#include <cstdint>
#include <vector>

#include "afanet/tensor.hpp"

namespace afanet::oracle {

/// Six nested loops, double accumulation.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

/// Mean of every 2x2 block.
Tensor avg_pool2(const Tensor& input);

/// Align-corners-false bilinear sampling, one output element at a time:
/// src = (i + 0.5) * in / out - 0.5 clamped to [0, in - 1].
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// Mean of -[t log p + (1 - t) log(1 - p)], p clamped to [1e-7, 1 - 1e-7].
double bce(const Tensor& pred, const Tensor& target);

struct MiouOracle {
  std::vector<std::size_t> classes;  // ascending
  std::vector<double> iou;           // same order as classes
  double mean = 0.0;
};

/// Per-class 2x2 confusion matrices filled pixel by pixel.
MiouOracle miou(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt,
                const std::vector<std::size_t>& class_ids);

}  // namespace afanet::oracle
