// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/cfm.hpp"

#include <algorithm>
#include <cmath>

namespace afanet::cfm {

void init_backbone(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg,
                   Rng& rng) {
  std::size_t cin = 3;
  for (std::size_t s = 0; s < 3; ++s) {
    store.add_conv(prefix + ".s" + std::to_string(s + 1), cfg.channels[s], cin, 3, rng);
    cin = cfg.channels[s];
  }
}

BackboneTaps toy_backbone(ParamBinder& p, const std::string& prefix, Var image) {
  Graph& g = p.graph();
  const Shape& s = g.shape(image);
  if (s.size() != 3 || s[0] != 3) throw_shape("toy_backbone: expected 3xHxW image");
  if (s[1] % 8 || s[2] % 8)
    throw_shape("toy_backbone: spatial size must be divisible by 8, got " + shape_str(s));
  Var x = image;
  Var taps[3];
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string n = prefix + ".s" + std::to_string(i + 1);
    x = ops::conv2d(g, x, p(n + ".w"), p(n + ".b"), 1, 1);
    x = ops::relu(g, x);
    x = ops::max_pool2(g, x);
    taps[i] = x;
  }
  return {taps[0], taps[1], taps[2]};
}

FrequencyPair octave_split(Graph& g, Var x) {
  const Shape& s = g.shape(x);
  if (s.size() != 3) throw_shape("octave_split: expected CxHxW");
  if (s[0] % 2 || s[1] % 2 || s[2] % 2)
    throw_shape("octave_split: channels and spatial dims must be even, got " + shape_str(s));
  const std::size_t half = s[0] / 2;
  FrequencyPair pair;
  pair.high = ops::slice_channels(g, x, 0, half);
  pair.low = ops::avg_pool2(g, ops::slice_channels(g, x, half, half));
  return pair;
}

void validate_pair(const Graph& g, const FrequencyPair& pair) {
  const Shape& h = g.shape(pair.high);
  const Shape& l = g.shape(pair.low);
  if (h.size() != 3 || l.size() != 3) throw_shape("frequency pair: branches must be CxHxW");
  if (h[0] != l[0])
    throw_shape("frequency pair: branch channel counts differ (" + std::to_string(h[0]) + " vs " +
                std::to_string(l[0]) + ")");
  if (h[1] != 2 * l[1] || h[2] != 2 * l[2])
    throw_shape("frequency pair: low branch must be half the high resolution, got " +
                shape_str(h) + " and " + shape_str(l));
}

void init_octave(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                 std::size_t out_channels, std::size_t kernel, Rng& rng) {
  // Two convolutions sum into each branch; halve the fan-in bound accordingly.
  const float bound = std::sqrt(3.0f / static_cast<float>(in_channels * kernel * kernel));
  for (const char* path : {"hh", "lh", "ll", "hl"})
    store.add(prefix + "." + path + ".w",
              rng.uniform_tensor({out_channels, in_channels, kernel, kernel}, -bound, bound));
  store.add(prefix + ".high.b", Tensor::zeros({out_channels}));
  store.add(prefix + ".low.b", Tensor::zeros({out_channels}));
}

OctaveWeights bind_octave(ParamBinder& p, const std::string& prefix) {
  return {p(prefix + ".hh.w"), p(prefix + ".lh.w"),  p(prefix + ".ll.w"),
          p(prefix + ".hl.w"), p(prefix + ".high.b"), p(prefix + ".low.b")};
}

FrequencyPair octave_conv(Graph& g, const FrequencyPair& pair, const OctaveWeights& w) {
  validate_pair(g, pair);
  const std::size_t cin = g.shape(pair.high)[0];
  const Shape& hh = g.shape(w.w_hh);
  if (hh.size() != 4) throw_shape("octave_conv: weights must be 4-D");
  const std::size_t cout = hh[0], k = hh[2];
  for (Var wt : {w.w_hh, w.w_lh, w.w_ll, w.w_hl}) {
    const Shape& ws = g.shape(wt);
    if (ws.size() != 4 || ws[0] != cout || ws[1] != cin || ws[2] != k || ws[3] != k)
      throw_shape("octave_conv: weight " + shape_str(ws) + " incompatible with " +
                  std::to_string(cin) + " input channels");
  }
  const int pad = static_cast<int>(k / 2);
  const Shape& hs = g.shape(pair.high);

  Var hh_out = ops::conv2d(g, pair.high, w.w_hh, w.b_high, 1, pad);
  Var lh_out = ops::conv2d(g, pair.low, w.w_lh, Var{}, 1, pad);
  Var high = ops::add(g, hh_out, ops::bilinear_resize(g, lh_out, hs[1], hs[2]));

  Var ll_out = ops::conv2d(g, pair.low, w.w_ll, w.b_low, 1, pad);
  Var hl_out = ops::conv2d(g, ops::avg_pool2(g, pair.high), w.w_hl, Var{}, 1, pad);
  Var low = ops::add(g, ll_out, hl_out);
  return {high, low};
}

Var fam_realign(Graph& g, const FrequencyPair& pair, std::size_t out_h, std::size_t out_w) {
  validate_pair(g, pair);
  return ops::add(g, ops::bilinear_resize(g, pair.high, out_h, out_w),
                  ops::bilinear_resize(g, pair.low, out_h, out_w));
}

namespace {

Var resize_like(Graph& g, Var x, Var like) {
  const Shape& s = g.shape(x);
  const Shape& t = g.shape(like);
  if (s[1] == t[1] && s[2] == t[2]) return x;
  return ops::bilinear_resize(g, x, t[1], t[2]);
}

}  // namespace

NcdTrace ncd(Graph& g, Var x1, Var x2, Var x3, Var fuse_w, Var fuse_b) {
  const Shape& s1 = g.shape(x1);
  const Shape& s2 = g.shape(x2);
  const Shape& s3 = g.shape(x3);
  if (s1.size() != 3 || s2.size() != 3 || s3.size() != 3)
    throw_shape("ncd: inputs must be CxHxW");
  if (s1[0] != s2[0] || s2[0] != s3[0])
    throw_shape("ncd: channel counts differ (" + std::to_string(s1[0]) + ", " +
                std::to_string(s2[0]) + ", " + std::to_string(s3[0]) + ")");
  if (s1[1] < s2[1] || s2[1] < s3[1] || s1[2] < s2[2] || s2[2] < s3[2])
    throw_shape("ncd: pyramid must be ordered largest (x1) to smallest (x3)");
  const Shape& fw = g.shape(fuse_w);
  if (fw.size() != 4 || fw[1] != 3 * s1[0])
    throw_shape("ncd: fusion weight must take " + std::to_string(3 * s1[0]) + " channels");

  NcdTrace t;
  t.f11 = ops::mul(g, x1, resize_like(g, x2, x1));
  t.f12 = ops::mul(g, x2, resize_like(g, x3, x2));
  t.f21 = ops::mul(g, t.f11, resize_like(g, t.f12, t.f11));
  {
    const Var parts[] = {t.f12, resize_like(g, x3, t.f12)};
    t.f22 = ops::concat_channels(g, parts);
  }
  {
    const Var parts[] = {t.f21, resize_like(g, t.f22, t.f21)};
    t.f3 = ops::concat_channels(g, parts);
  }
  t.out = ops::conv2d(g, t.f3, fuse_w, fuse_b, 1, static_cast<int>(fw[2] / 2));
  return t;
}

void init_cfm(ParamStore& store, const CfmConfig& cfg, const BackboneConfig& backbone, Rng& rng) {
  for (std::size_t i = 0; i < 3; ++i)
    init_octave(store, "cfm.tap" + std::to_string(i + 1), backbone.channels[i] / 2,
                cfg.fam_channels, cfg.kernel, rng);
  store.add_conv("cfm.ncd.fuse", cfg.ncd_channels, 3 * cfg.fam_channels, 3, rng);
}

std::array<std::size_t, 3> realign_sizes(const CfmConfig& cfg, std::size_t image_size) {
  // The low-level tap goes straight to the output grid; deeper taps keep
  // their own high-branch resolution.
  const std::size_t mid = std::min(cfg.grid, image_size / 4);
  return {cfg.grid, mid, std::min(mid, image_size / 8)};
}

Var cfm_from_taps(ParamBinder& p, const CfmConfig& cfg, const BackboneTaps& taps,
                  std::size_t image_size) {
  Graph& g = p.graph();
  const auto sizes = realign_sizes(cfg, image_size);
  const Var tap_vars[] = {taps.low_level, taps.mid_level, taps.high_level};
  Var realigned[3];
  for (std::size_t i = 0; i < 3; ++i) {
    const FrequencyPair pair = octave_split(g, tap_vars[i]);
    const FrequencyPair mixed =
        octave_conv(g, pair, bind_octave(p, "cfm.tap" + std::to_string(i + 1)));
    realigned[i] = fam_realign(g, mixed, sizes[i], sizes[i]);
  }
  return ncd(g, realigned[0], realigned[1], realigned[2], p("cfm.ncd.fuse.w"),
             p("cfm.ncd.fuse.b"))
      .out;
}

Var cfm_forward(ParamBinder& p, const CfmConfig& cfg, Var image) {
  const BackboneTaps taps = toy_backbone(p, "backbone", image);
  return cfm_from_taps(p, cfg, taps, p.graph().shape(image)[1]);
}

}  // namespace afanet::cfm
