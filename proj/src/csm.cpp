// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/csm.hpp"

#include <algorithm>

namespace afanet::csm {

Tensor ClassEmbeddingTable::row(std::size_t class_id) const {
  if (class_id >= size())
    throw_invalid("class id " + std::to_string(class_id) + " not in embedding table of " +
                  std::to_string(size()) + " classes");
  const auto d = vectors.data();
  return Tensor({dim}, std::vector<float>(d.begin() + class_id * dim,
                                          d.begin() + (class_id + 1) * dim));
}

void ClassEmbeddingTable::validate() const {
  if (dim == 0) throw_invalid("embedding table: dim must be positive");
  if (vectors.shape() != Shape{size(), dim})
    throw_shape("embedding table: vectors " + shape_str(vectors.shape()) + " do not match " +
                std::to_string(size()) + " classes of dim " + std::to_string(dim));
  if (!vectors.all_finite()) throw Error(ErrorCode::kNumeric, "embedding table: non-finite value");
}

void init_adapter(ParamStore& store, const CsmConfig& cfg, Rng& rng) {
  const std::size_t cells = cfg.adapter_size * cfg.adapter_size;
  store.add("csm.proj.w", rng.normal_tensor({cells, cfg.text_dim}, 0.01f));
  store.add("csm.proj.b", Tensor::ones({cells}));
}

Var text_to_grid(Graph& g, Var text, Var proj_w, Var proj_b, std::size_t adapter_size) {
  const Shape& ws = g.shape(proj_w);
  if (ws.size() != 2 || ws[0] != adapter_size * adapter_size)
    throw_shape("text_to_grid: projection " + shape_str(ws) + " does not emit " +
                std::to_string(adapter_size * adapter_size) + " values");
  return ops::reshape(g, ops::linear(g, text, proj_w, proj_b), {1, adapter_size, adapter_size});
}

Var csm_fuse(Graph& g, Var f, Var t_grid, const CsmConfig& cfg) {
  const Shape fs = g.shape(f);
  const Shape ts = g.shape(t_grid);
  if (fs.size() != 3 || fs[1] != cfg.grid || fs[2] != cfg.grid)
    throw_shape("csm_fuse: features must be Cx" + std::to_string(cfg.grid) + "x" +
                std::to_string(cfg.grid) + ", got " + shape_str(fs));
  if (ts != Shape{1, cfg.adapter_size, cfg.adapter_size})
    throw_shape("csm_fuse: text grid must be 1x" + std::to_string(cfg.adapter_size) + "x" +
                std::to_string(cfg.adapter_size) + ", got " + shape_str(ts));
  const std::size_t s = cfg.adapter_size;
  Var down = ops::bilinear_resize(g, f, s, s);
  Var fused = ops::mul(g, down, ops::broadcast_channels(g, t_grid, fs[0]));
  return ops::bilinear_resize(g, fused, cfg.grid, cfg.grid);
}

std::pair<Var, Var> csm_forward(ParamBinder& p, const CsmConfig& cfg, Var f_support,
                                Var f_query, std::size_t class_id,
                                const ClassEmbeddingTable& table) {
  Graph& g = p.graph();
  if (table.dim != cfg.text_dim)
    throw_shape("csm_forward: embedding dim " + std::to_string(table.dim) +
                " differs from adapter input " + std::to_string(cfg.text_dim));
  Var text = g.constant(table.row(class_id));
  Var grid = text_to_grid(g, text, p("csm.proj.w"), p("csm.proj.b"), cfg.adapter_size);
  return {csm_fuse(g, f_support, grid, cfg), csm_fuse(g, f_query, grid, cfg)};
}

}  // namespace afanet::csm
