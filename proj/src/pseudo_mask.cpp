// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/pseudo_mask.hpp"

namespace afanet::pseudo_mask {

namespace {

Var activation(Graph& g, Var features, Var class_embedding) {
  const Shape& fs = g.shape(features);
  const Shape& es = g.shape(class_embedding);
  if (fs.size() != 3 || es.size() != 1 || fs[0] != es[0])
    throw_shape("cam: embedding " + shape_str(es) + " does not match features " + shape_str(fs));
  return ops::relu(g, ops::channel_weighted_sum(g, features, class_embedding));
}

}  // namespace

Var cam(Graph& g, Var features, Var class_embedding) {
  return ops::max_normalize(g, activation(g, features, class_embedding));
}

Var cam_resized(Graph& g, Var features, Var class_embedding, std::size_t out_h,
                std::size_t out_w) {
  Var a = activation(g, features, class_embedding);
  return ops::max_normalize(g, ops::bilinear_resize(g, a, out_h, out_w));
}

Tensor cam_tensor(const Tensor& features, const Tensor& class_embedding) {
  Graph g;
  return g.value(cam(g, g.constant(features), g.constant(class_embedding)));
}

void init_head(ParamStore& store, const HeadConfig& cfg, std::size_t feature_channels, Rng& rng) {
  if (cfg.iterations < 1) throw_invalid("head: iterations must be >= 1");
  store.add_conv("head.conv1", cfg.hidden, feature_channels + 1, 3, rng);
  store.add_conv("head.conv2", 1, cfg.hidden, 3, rng);
}

HeadOutput seg_head(ParamBinder& p, const HeadConfig& cfg, Var features, Var init_mask) {
  if (cfg.iterations < 1) throw_invalid("seg_head: iterations must be >= 1");
  Graph& g = p.graph();
  const Shape fs = g.shape(features);
  const Shape ms = g.shape(init_mask);
  if (fs.size() != 3 || ms != Shape{1, fs[1], fs[2]})
    throw_shape("seg_head: mask " + shape_str(ms) + " does not match features " + shape_str(fs));
  const Var w1 = p("head.conv1.w"), b1 = p("head.conv1.b");
  const Var w2 = p("head.conv2.w"), b2 = p("head.conv2.b");

  HeadOutput out;
  Var prev = init_mask;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const Var parts[] = {features, prev};
    Var h = ops::relu(g, ops::conv2d(g, ops::concat_channels(g, parts), w1, b1, 1, 1));
    Var mask = ops::sigmoid(g, ops::conv2d(g, h, w2, b2, 1, 1));
    out.grid_masks.push_back(mask);
    out.image_masks.push_back(ops::bilinear_resize(g, mask, cfg.image_size, cfg.image_size));
    prev = mask;
  }
  return out;
}

Tensor binarize(const Tensor& mask, float threshold) {
  Tensor out(mask.shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) out[i] = mask[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

}  // namespace afanet::pseudo_mask
