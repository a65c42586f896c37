// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-granularity frequency-aware module: backbone taps are split into
// octave (high/low frequency) pairs, exchanged through octave convolution,
// realigned to a common resolution and fused by a neighbor connection decoder.

#pragma once

#include <array>
#include <string>

#include "afanet/graph.hpp"
#include "afanet/params.hpp"

namespace afanet::cfm {

/// High-frequency map at full resolution and low-frequency map at half
/// resolution, both with the same channel count.
struct FrequencyPair {
  Var high;
  Var low;
};

struct OctaveWeights {
  Var w_hh, w_lh, w_ll, w_hl;
  Var b_high, b_low;
};

/// Taps after the three backbone stages (strides 2, 4, 8).
struct BackboneTaps {
  Var low_level;
  Var mid_level;
  Var high_level;
};

struct BackboneConfig {
  std::array<std::size_t, 3> channels{8, 16, 32};
};

struct CfmConfig {
  std::size_t fam_channels = 8;  // C: per-branch channels after octave conv
  std::size_t ncd_channels = 8;  // C_N
  std::size_t grid = 50;         // output resolution
  std::size_t kernel = 3;
};

void init_backbone(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg,
                   Rng& rng);
/// Three conv3x3 + relu + max-pool stages. H and W must be divisible by 8.
BackboneTaps toy_backbone(ParamBinder& p, const std::string& prefix, Var image);

/// First C/2 channels become the high branch; the rest are average pooled
/// into the low branch. C, H and W must be even.
FrequencyPair octave_split(Graph& g, Var x);
void validate_pair(const Graph& g, const FrequencyPair& pair);

void init_octave(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                 std::size_t out_channels, std::size_t kernel, Rng& rng);
OctaveWeights bind_octave(ParamBinder& p, const std::string& prefix);

/// high' = conv(high, W_hh) + up(conv(low, W_lh)); low' = conv(low, W_ll) +
/// conv(pool(high), W_hl). Spatial sizes are preserved per branch.
FrequencyPair octave_conv(Graph& g, const FrequencyPair& pair, const OctaveWeights& w);

/// resize(high) + resize(low) at (out_h, out_w).
Var fam_realign(Graph& g, const FrequencyPair& pair, std::size_t out_h, std::size_t out_w);

struct NcdTrace {
  Var f11, f12, f21, f22, f3, out;
};

/// Neighbor connection decoder over a three-level pyramid (x1 largest). Every
/// upsample targets the spatial size of the operand it is combined with, and
/// the 3C-channel f3 is fused to C_N channels by one 3x3 convolution.
NcdTrace ncd(Graph& g, Var x1, Var x2, Var x3, Var fuse_w, Var fuse_b);

void init_cfm(ParamStore& store, const CfmConfig& cfg, const BackboneConfig& backbone, Rng& rng);

/// Per-tap resolution that fam_realign targets before the decoder.
std::array<std::size_t, 3> realign_sizes(const CfmConfig& cfg, std::size_t image_size);

/// FAM on every tap followed by the NCD; returns C_N x grid x grid.
Var cfm_from_taps(ParamBinder& p, const CfmConfig& cfg, const BackboneTaps& taps,
                  std::size_t image_size);

/// toy_backbone + cfm_from_taps.
Var cfm_forward(ParamBinder& p, const CfmConfig& cfg, Var image);

}  // namespace afanet::cfm
