// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Full few-shot segmentation model: frozen backbone and CAM projection,
// feature path (single-tap projection or CFM), optional text adapter and
// the iterative head.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "afanet/cfm.hpp"
#include "afanet/csm.hpp"
#include "afanet/data.hpp"
#include "afanet/pseudo_mask.hpp"

namespace afanet::model {

struct ModelConfig {
  bool use_cfm = true;
  bool use_csm = true;
  std::size_t image_size = 64;
  cfm::BackboneConfig backbone;
  cfm::CfmConfig cfm;
  csm::CsmConfig csm;
  pseudo_mask::HeadConfig head;

  /// Throws on inconsistent sizes.
  void validate() const;
  /// "baseline", "cfm", "csm" or "cfm+csm".
  std::string modules_label() const;
};

/// Parameter name prefixes that stay fixed during episodic training.
const std::vector<std::string>& frozen_prefixes();

struct PretrainConfig {
  std::size_t steps = 400;
  std::size_t batch = 8;
  std::size_t background_per_batch = 2;
  float lr = 0.005f;
  float momentum = 0.9f;
  float logit_scale = 5.0f;  // multiplies class and objectness logits
};

/// Trains backbone.* and cam.* on image-level labels of `classes`: softmax
/// cross-entropy over those classes plus object-vs-background logistic loss on
/// the shared bias of the CAM projection.
using PretrainObserver = std::function<void(std::size_t step, double loss)>;

ParamStore pretrain(const ModelConfig& cfg, const PretrainConfig& pcfg, const data::Dataset& ds,
                    const std::vector<std::size_t>& classes, const csm::ClassEmbeddingTable& table,
                    std::uint64_t seed, const PretrainObserver& observer = {});

/// CAM weights for one class: cam.proj.w · t + cam.proj.b.
Tensor class_cam_weights(const ParamStore& params, const csm::ClassEmbeddingTable& table,
                         std::size_t class_id);

/// Frozen quantities derived once per image.
struct ImageEntry {
  std::array<Tensor, 3> taps;
  Tensor cam_image;  // 1 x H x W pseudo target
  Tensor cam_grid;   // 1 x G x G, head initialization
};

/// Per-sample backbone taps and pseudo-masks (each sample uses its own label).
std::vector<ImageEntry> build_cache(const ModelConfig& cfg, const ParamStore& params,
                                    const data::Dataset& ds,
                                    const csm::ClassEmbeddingTable& table);

/// Adds the trainable parameters selected by the module toggles.
void init_model(ParamStore& store, const ModelConfig& cfg, Rng& rng);

struct EpisodeInputs {
  std::vector<const ImageEntry*> support;
  const ImageEntry* query = nullptr;
  std::size_t class_id = 0;
};

struct EpisodeOutputs {
  std::vector<std::vector<Var>> support_masks;  // [shot][iteration], image resolution
  std::vector<Var> query_masks;                 // [iteration], image resolution
};

/// Features at the canonical grid for one image.
Var features(ParamBinder& p, const ModelConfig& cfg, const ImageEntry& image);

EpisodeOutputs forward_episode(ParamBinder& p, const ModelConfig& cfg,
                               const csm::ClassEmbeddingTable& table, const EpisodeInputs& in);

/// Final-iteration query mask thresholded at 0.5.
Tensor predict_query(const ModelConfig& cfg, const ParamStore& params,
                     const csm::ClassEmbeddingTable& table, const EpisodeInputs& in);

}  // namespace afanet::model
