// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Episode sampling over base/novel folds, the per-iteration training loss,
// the SGD training loop and mIoU evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "afanet/model.hpp"

namespace afanet::episodic {

struct SplitConfig {
  std::size_t fold = 0;
  std::size_t classes_per_fold = 2;
  std::vector<std::size_t> base;
  std::vector<std::size_t> novel;
};

/// Fold f holds out classes [f * per_fold, (f + 1) * per_fold) as novel.
/// Throws if the fold is out of range or the two sets overlap.
SplitConfig make_split(std::size_t fold, std::size_t num_classes, std::size_t classes_per_fold = 2);

/// 1-way episode referencing dataset samples. Ground-truth masks stay in the
/// dataset and are only read by evaluation.
struct Episode {
  std::size_t class_id = 0;
  std::vector<std::size_t> support;
  std::size_t query = 0;
};

/// Uniform class from `classes`, then k + 1 distinct images of that class.
Episode sample_episode(const data::Dataset& ds, const std::vector<std::size_t>& classes,
                       std::size_t k, Rng& rng);

/// Σ_t [alpha · BCE(support_t, pseudo_s) + beta · BCE(query_t, pseudo_q)].
/// With several support shots, the support term is their mean.
Var total_loss(Graph& g, const std::vector<std::vector<Var>>& support_masks,
               const std::vector<Var>& query_masks, const std::vector<Var>& pseudo_support,
               Var pseudo_query, float alpha, float beta);

struct TrainConfig {
  std::size_t episodes = 2000;
  std::size_t shots = 1;
  float lr = 1e-2f;
  float momentum = 0.9f;
  float alpha = 1.0f;
  float beta = 1.0f;
  float clip_norm = 1.0f;  // global gradient norm bound, 0 disables
  std::uint64_t seed = 0;
};

using EpisodeObserver = std::function<void(std::size_t step, const Episode& episode)>;

struct TrainResult {
  ParamStore params;
  std::vector<double> losses;  // one per step
};

/// Everything training and evaluation read but never modify.
struct Context {
  const data::Dataset* dataset = nullptr;
  const std::vector<model::ImageEntry>* cache = nullptr;
  const csm::ClassEmbeddingTable* table = nullptr;
};

model::EpisodeInputs episode_inputs(const Context& ctx, const Episode& e);

/// SGD with momentum over base-class episodes. When `fixed` is non-empty the
/// loop cycles through it instead of sampling. Aborts on a non-finite loss.
TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const Context& ctx,
                  const SplitConfig& split, ParamStore params,
                  const std::vector<Episode>& fixed = {}, const EpisodeObserver& observer = {});

/// "step,loss" with one row per step.
std::string loss_csv(const std::vector<double>& losses);

struct MiouResult {
  std::map<std::size_t, double> per_class;
  double mean = 0.0;
};

/// Per class, TP / (TP + FP + FN) accumulated over every pair of that class;
/// mean over the classes present.
MiouResult miou(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt,
                const std::vector<std::size_t>& class_ids);

struct EvalReport {
  std::size_t episodes = 0;
  MiouResult model;
  MiouResult constant_foreground;
  MiouResult constant_background;
  std::string to_json(const std::vector<std::string>& class_names) const;
};

/// Runs predict_query on `episodes` sampled episodes from `classes`.
EvalReport evaluate(const model::ModelConfig& mcfg, const ParamStore& params, const Context& ctx,
                    const std::vector<std::size_t>& classes, std::size_t episodes,
                    std::size_t shots, std::uint64_t seed);

}  // namespace afanet::episodic
