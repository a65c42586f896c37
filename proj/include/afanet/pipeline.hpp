// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs driven by a JSON configuration (see docs/config.md).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "afanet/episodic.hpp"
#include "afanet/io.hpp"

namespace afanet::pipeline {

struct RunConfig {
  std::string data_dir;  // empty: render the dataset in memory from `data`
  data::GenOptions data;
  std::string embeddings;  // CLIPEMB1 file; empty: pseudo embeddings
  std::uint64_t embedding_seed = 0;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::size_t shots = 1;
  model::ModelConfig model;
  model::PretrainConfig pretrain;
  episodic::TrainConfig train;  // seed and shots are taken from the fields above
  std::size_t eval_episodes = 200;
};

/// Parses a JSON object; absent fields keep their defaults, unknown fields and
/// wrong types are rejected.
RunConfig parse_config(const std::string& json_text);
/// Applies a JSON object on top of an existing configuration.
void merge_config(RunConfig& cfg, const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);

/// Dataset, embeddings, pretrained frozen parameters and per-image cache.
struct Prepared {
  data::Dataset dataset;
  csm::ClassEmbeddingTable table;
  episodic::SplitConfig split;
  ParamStore frozen;
  std::vector<model::ImageEntry> cache;

  episodic::Context context() const { return {&dataset, &cache, &table}; }
};

data::Dataset load_or_render(const RunConfig& cfg);
csm::ClassEmbeddingTable load_table(const RunConfig& cfg, const std::vector<std::string>& names);
/// Pretrains on the base classes of cfg.fold with cfg.seed.
Prepared prepare(const RunConfig& cfg);
Prepared prepare(const RunConfig& cfg, data::Dataset dataset, csm::ClassEmbeddingTable table);

/// Frozen parameters plus freshly initialized model parameters.
ParamStore initial_params(const RunConfig& cfg, const ParamStore& frozen);

struct TrainOutcome {
  io::Checkpoint checkpoint;
  std::vector<double> losses;
};

TrainOutcome run_train(const RunConfig& cfg);
TrainOutcome run_train(const RunConfig& cfg, const Prepared& prep);

/// Configuration stored in a checkpoint, with data, seed, shots and episode
/// count taken from `request`.
RunConfig checkpoint_config(const io::Checkpoint& ckpt, const RunConfig& request);

/// Evaluates a checkpoint on the novel classes of its fold. Model, fold and
/// embedding settings come from the checkpoint; data, seed, shots and episode
/// count from `request`.
episodic::EvalReport run_eval(const io::Checkpoint& ckpt, const RunConfig& request,
                              std::vector<std::string>* class_names = nullptr);

/// Writes cam_<image>.pgm (pseudo-mask) and pred_<image>.pgm (query
/// prediction, supported by the previous image of the class) for up to
/// `per_class` images per class. Returns the number of images written.
std::size_t run_cam_dump(const io::Checkpoint& ckpt, const RunConfig& request,
                         std::size_t per_class, const std::filesystem::path& out_dir);

struct AblationRequest {
  RunConfig base;
  std::vector<std::string> modules{"baseline", "cfm", "cfm+csm"};
  std::vector<std::size_t> adapter_sizes;              // empty: base value
  std::vector<std::pair<float, float>> alpha_betas;    // empty: base value
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct AblationRow {
  std::string modules;
  std::size_t adapter_size = 0;
  float alpha = 1.0f, beta = 1.0f;
  std::vector<double> miou_per_seed;
  std::vector<double> constant_foreground_per_seed;
  double mean_miou() const;
  double mean_constant_foreground() const;
};

/// Sets use_cfm/use_csm from "baseline", "cfm", "csm" or "cfm+csm".
void apply_modules(model::ModelConfig& cfg, const std::string& modules);

/// Pretrains once per seed and shares it across every configuration row.
std::vector<AblationRow> run_ablation(const AblationRequest& req);
std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::vector<std::uint64_t>& seeds);

}  // namespace afanet::pipeline
