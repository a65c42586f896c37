// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Text-guided spatial adapter: a class text embedding is projected to a
// square grid, multiplied into down-sampled features and up-sampled back.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "afanet/graph.hpp"
#include "afanet/params.hpp"

namespace afanet::csm {

/// Per-class text embeddings, one row per class name.
struct ClassEmbeddingTable {
  std::vector<std::string> class_names;
  std::size_t dim = 0;
  Tensor vectors;  // num_classes x dim

  std::size_t size() const { return class_names.size(); }
  /// Row `class_id` as a rank-1 tensor. Throws on an unknown id.
  Tensor row(std::size_t class_id) const;
  /// Throws unless names, dim and vectors agree and every value is finite.
  void validate() const;
};

struct CsmConfig {
  std::size_t adapter_size = 25;
  std::size_t grid = 50;  // feature resolution entering and leaving the adapter
  std::size_t text_dim = 1024;
};

/// Adds `csm.proj.w` [s² x text_dim] and `csm.proj.b` [s²]. The bias starts at
/// one and the weight near zero, so a fresh adapter is close to pure resampling.
void init_adapter(ParamStore& store, const CsmConfig& cfg, Rng& rng);

/// linear(t) reshaped row-major to 1 x s x s.
Var text_to_grid(Graph& g, Var text, Var proj_w, Var proj_b, std::size_t adapter_size);

/// resize(resize(f, s, s) * broadcast(t_grid), grid, grid). `f` must be
/// C x grid x grid and `t_grid` 1 x s x s.
Var csm_fuse(Graph& g, Var f, Var t_grid, const CsmConfig& cfg);

/// One text grid per episode class, applied to support and query alike.
std::pair<Var, Var> csm_forward(ParamBinder& p, const CsmConfig& cfg, Var f_support,
                                Var f_query, std::size_t class_id,
                                const ClassEmbeddingTable& table);

}  // namespace afanet::csm
