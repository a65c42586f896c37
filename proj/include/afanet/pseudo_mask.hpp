// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Class activation maps used as pseudo ground truth, and the small iterative
// refinement head that turns fused features into per-iteration masks.

#pragma once

#include <string>
#include <vector>

#include "afanet/graph.hpp"
#include "afanet/params.hpp"

namespace afanet::pseudo_mask {

/// relu(Σ_c e_c · F_c) followed by max_normalize. Output is 1 x h x w in [0,1].
Var cam(Graph& g, Var features, Var class_embedding);

/// Same as cam, but the relu'd map is bilinearly resized to out_h x out_w
/// before normalization.
Var cam_resized(Graph& g, Var features, Var class_embedding, std::size_t out_h,
                std::size_t out_w);

/// Plain-tensor cam for callers that do not need gradients.
Tensor cam_tensor(const Tensor& features, const Tensor& class_embedding);

struct HeadConfig {
  std::size_t iterations = 3;
  std::size_t hidden = 8;
  std::size_t image_size = 64;
};

/// Adds `head.conv1` (C+1 -> hidden) and `head.conv2` (hidden -> 1), both 3x3.
void init_head(ParamStore& store, const HeadConfig& cfg, std::size_t feature_channels, Rng& rng);

struct HeadOutput {
  std::vector<Var> grid_masks;   // 1 x G x G, fed back into the next iteration
  std::vector<Var> image_masks;  // 1 x image_size x image_size
};

/// mask_t = sigmoid(conv2(relu(conv1(cat(f, mask_{t-1}))))), t = 1..N, with
/// weights shared across iterations.
HeadOutput seg_head(ParamBinder& p, const HeadConfig& cfg, Var features, Var init_mask);

/// 1.0 where mask >= threshold, else 0.0.
Tensor binarize(const Tensor& mask, float threshold = 0.5f);

}  // namespace afanet::pseudo_mask
