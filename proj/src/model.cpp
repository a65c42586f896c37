// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/model.hpp"

#include <cmath>

#include "afanet/optim.hpp"

namespace afanet::model {

void ModelConfig::validate() const {
  if (image_size < 16 || image_size % 8) throw_invalid("model: image_size must be a multiple of 8");
  for (std::size_t c : backbone.channels)
    if (c == 0 || c % 2) throw_invalid("model: backbone channels must be positive and even");
  if (cfm.fam_channels == 0 || cfm.ncd_channels == 0 || cfm.kernel % 2 == 0)
    throw_invalid("model: invalid CFM sizes");
  if (csm.adapter_size == 0) throw_invalid("model: adapter_size must be positive");
  if (csm.grid != cfm.grid) throw_invalid("model: adapter grid must equal the feature grid");
  if (csm.text_dim == 0) throw_invalid("model: text_dim must be positive");
  if (head.iterations < 1 || head.hidden == 0) throw_invalid("model: invalid head sizes");
  if (head.image_size != image_size) throw_invalid("model: head image_size must match");
}

std::string ModelConfig::modules_label() const {
  if (use_cfm && use_csm) return "cfm+csm";
  if (use_cfm) return "cfm";
  if (use_csm) return "csm";
  return "baseline";
}

const std::vector<std::string>& frozen_prefixes() {
  static const std::vector<std::string> prefixes{"backbone.", "cam."};
  return prefixes;
}

namespace {

Var cam_embedding(ParamBinder& p, const csm::ClassEmbeddingTable& table, std::size_t class_id) {
  Graph& g = p.graph();
  return ops::linear(g, g.constant(table.row(class_id)), p("cam.proj.w"), p("cam.proj.b"));
}

Var sum_all(Graph& g, const std::vector<Var>& terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(g, total, terms[i]);
  return total;
}

}  // namespace

ParamStore pretrain(const ModelConfig& cfg, const PretrainConfig& pcfg, const data::Dataset& ds,
                    const std::vector<std::size_t>& classes, const csm::ClassEmbeddingTable& table,
                    std::uint64_t seed, const PretrainObserver& observer) {
  cfg.validate();
  if (classes.size() < 2) throw_invalid("pretrain: need at least two classes");
  if (pcfg.batch <= pcfg.background_per_batch) throw_invalid("pretrain: batch too small");
  if (pcfg.background_per_batch > 0 && ds.backgrounds.empty())
    throw_invalid("pretrain: dataset has no background images");
  if (table.dim != cfg.csm.text_dim) throw_shape("pretrain: embedding dim mismatch");

  Rng init(derive_seed(seed, "pretrain/init"));
  ParamStore store;
  cfm::init_backbone(store, "backbone", cfg.backbone, init);
  const std::size_t c3 = cfg.backbone.channels[2];
  store.add("cam.proj.w", Tensor::zeros({c3, table.dim}));
  store.add("cam.proj.b", init.normal_tensor({c3}, 0.1f));
  store.add("cam.obj.b", Tensor::zeros({1}));

  std::vector<std::vector<std::size_t>> pools;
  for (std::size_t c : classes) pools.push_back(ds.indices_of(c));

  Sgd opt(pcfg.lr, pcfg.momentum);
  Rng rng(derive_seed(seed, "pretrain/sample"));
  for (std::size_t step = 0; step < pcfg.steps; ++step) {
    Graph g;
    ParamBinder p(g, store, true);
    std::vector<Var> terms;
    for (std::size_t b = 0; b < pcfg.batch; ++b) {
      const bool object = b >= pcfg.background_per_batch;
      std::size_t label = 0;
      const Tensor* image;
      if (object) {
        label = rng.index(classes.size());
        image = &ds.samples[pools[label][rng.index(pools[label].size())]].image;
      } else {
        image = &ds.backgrounds[rng.index(ds.backgrounds.size())];
      }
      const cfm::BackboneTaps taps = cfm::toy_backbone(p, "backbone", g.constant(*image));
      Var pooled = ops::global_avg_pool(g, taps.high_level);
      if (object) {
        Var obj = ops::add(g, ops::scale(g, ops::dot(g, p("cam.proj.b"), pooled), pcfg.logit_scale),
                           p("cam.obj.b"));
        terms.push_back(ops::bce(g, ops::sigmoid(g, obj), g.constant(Tensor::ones({1}))));
      } else {
        // No object anywhere: every location is a negative.
        const Shape& hs = g.shape(taps.high_level);
        Var map = ops::scale(g, ops::channel_weighted_sum(g, taps.high_level, p("cam.proj.b")),
                             pcfg.logit_scale);
        terms.push_back(
            ops::bce(g, ops::sigmoid(g, map), g.constant(Tensor::zeros({1, hs[1], hs[2]}))));
      }
      if (object) {
        std::vector<Var> logits;
        for (std::size_t c : classes)
          logits.push_back(
              ops::scale(g, ops::dot(g, cam_embedding(p, table, c), pooled), pcfg.logit_scale));
        terms.push_back(ops::softmax_cross_entropy(g, ops::concat_vectors(g, logits), label));
      }
    }
    Var loss = ops::scale(g, sum_all(g, terms), 1.0f / static_cast<float>(pcfg.batch));
    if (!std::isfinite(g.value(loss)[0]))
      throw Error(ErrorCode::kNumeric, "pretrain: non-finite loss at step " + std::to_string(step));
    if (observer) observer(step, g.value(loss)[0]);
    g.backward(loss);
    opt.step(store, p);
  }
  return store;
}

Tensor class_cam_weights(const ParamStore& params, const csm::ClassEmbeddingTable& table,
                         std::size_t class_id) {
  Graph g;
  ParamBinder p(g, params, false);
  return g.value(cam_embedding(p, table, class_id));
}

std::vector<ImageEntry> build_cache(const ModelConfig& cfg, const ParamStore& params,
                                    const data::Dataset& ds,
                                    const csm::ClassEmbeddingTable& table) {
  cfg.validate();
  std::vector<Tensor> weights;
  for (std::size_t c = 0; c < ds.class_names.size(); ++c)
    weights.push_back(class_cam_weights(params, table, c));
  std::vector<ImageEntry> cache;
  cache.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    Graph g;
    ParamBinder p(g, params, false);
    const cfm::BackboneTaps taps = cfm::toy_backbone(p, "backbone", g.constant(s.image));
    Var w = g.constant(weights[s.class_id]);
    ImageEntry e;
    e.taps = {g.value(taps.low_level), g.value(taps.mid_level), g.value(taps.high_level)};
    e.cam_image = g.value(
        pseudo_mask::cam_resized(g, taps.high_level, w, cfg.image_size, cfg.image_size));
    e.cam_grid = g.value(pseudo_mask::cam_resized(g, taps.high_level, w, cfg.cfm.grid, cfg.cfm.grid));
    cache.push_back(std::move(e));
  }
  return cache;
}

void init_model(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.use_cfm) {
    cfm::init_cfm(store, cfg.cfm, cfg.backbone, rng);
  } else {
    store.add_conv("base.proj", cfg.cfm.ncd_channels, cfg.backbone.channels[2], 3, rng);
  }
  if (cfg.use_csm) csm::init_adapter(store, cfg.csm, rng);
  pseudo_mask::init_head(store, cfg.head, cfg.cfm.ncd_channels, rng);
}

Var features(ParamBinder& p, const ModelConfig& cfg, const ImageEntry& image) {
  Graph& g = p.graph();
  if (cfg.use_cfm) {
    const cfm::BackboneTaps taps{g.constant(image.taps[0]), g.constant(image.taps[1]),
                                 g.constant(image.taps[2])};
    return cfm::cfm_from_taps(p, cfg.cfm, taps, cfg.image_size);
  }
  Var x = ops::conv2d(g, g.constant(image.taps[2]), p("base.proj.w"), p("base.proj.b"), 1, 1);
  return ops::bilinear_resize(g, x, cfg.cfm.grid, cfg.cfm.grid);
}

EpisodeOutputs forward_episode(ParamBinder& p, const ModelConfig& cfg,
                               const csm::ClassEmbeddingTable& table, const EpisodeInputs& in) {
  if (in.support.empty() || in.query == nullptr)
    throw_invalid("forward_episode: need at least one support image and a query");
  Graph& g = p.graph();
  std::vector<Var> fs;
  for (const ImageEntry* s : in.support) fs.push_back(features(p, cfg, *s));
  Var fq = features(p, cfg, *in.query);
  if (cfg.use_csm) {
    if (table.dim != cfg.csm.text_dim) throw_shape("forward_episode: embedding dim mismatch");
    Var text = g.constant(table.row(in.class_id));
    Var grid = csm::text_to_grid(g, text, p("csm.proj.w"), p("csm.proj.b"), cfg.csm.adapter_size);
    for (Var& f : fs) f = csm::csm_fuse(g, f, grid, cfg.csm);
    fq = csm::csm_fuse(g, fq, grid, cfg.csm);
  }

  EpisodeOutputs out;
  std::vector<Var> protos;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    Var cam = g.constant(in.support[k]->cam_grid);
    out.support_masks.push_back(pseudo_mask::seg_head(p, cfg.head, fs[k], cam).image_masks);
    protos.push_back(ops::masked_avg_pool(g, fs[k], cam));
  }
  Var proto = ops::scale(g, sum_all(g, protos), 1.0f / static_cast<float>(protos.size()));
  Var prior = ops::relu(g, ops::cosine_map(g, fq, proto));
  out.query_masks = pseudo_mask::seg_head(p, cfg.head, fq, prior).image_masks;
  return out;
}

Tensor predict_query(const ModelConfig& cfg, const ParamStore& params,
                     const csm::ClassEmbeddingTable& table, const EpisodeInputs& in) {
  Graph g;
  ParamBinder p(g, params, false);
  const EpisodeOutputs out = forward_episode(p, cfg, table, in);
  return pseudo_mask::binarize(g.value(out.query_masks.back()));
}

}  // namespace afanet::model
