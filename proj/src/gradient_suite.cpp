// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/gradient_suite.hpp"

#include <functional>
#include <memory>
#include <string>

#include "afanet/cfm.hpp"
#include "afanet/csm.hpp"
#include "afanet/episodic.hpp"
#include "afanet/model.hpp"
#include "afanet/pseudo_mask.hpp"

namespace afanet {

namespace {

struct Case {
  ScalarFn f;
  std::vector<Tensor> inputs;
  std::size_t max_coords = 0;
};

using Builder = std::function<Case(Rng&)>;

Tensor rand(Rng& rng, Shape s) { return rng.uniform_tensor(std::move(s), -1.0f, 1.0f); }

// Random linear functional, so every output element matters with its own weight.
Var project(Graph& g, Var y, const Tensor& r) { return ops::sum(g, ops::mul(g, y, g.constant(r))); }

// Binary disk at a random position, like a pseudo-mask.
Tensor blob(Rng& rng, std::size_t size) {
  Tensor t({1, size, size});
  const float n = static_cast<float>(size);
  const float cx = rng.uniform(0.3f, 0.7f) * n, cy = rng.uniform(0.3f, 0.7f) * n;
  const float r = rng.uniform(0.2f, 0.3f) * n;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const float dx = static_cast<float>(x) + 0.5f - cx, dy = static_cast<float>(y) + 0.5f - cy;
      t[y * size + x] = dx * dx + dy * dy <= r * r ? 1.0f : 0.0f;
    }
  return t;
}

Case unary(Rng& rng, Shape in, Shape out, std::function<Var(Graph&, Var)> op) {
  Tensor r = rand(rng, std::move(out));
  return {[op, r](Graph& g, std::span<const Var> v) { return project(g, op(g, v[0]), r); },
          {rand(rng, std::move(in))}};
}

// Parameter-store backed case: every named tensor becomes an input.
struct StoreCase {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  explicit StoreCase(const ParamStore& store) {
    for (const auto& [n, t] : store.tensors()) {
      names.push_back(n);
      values.push_back(t);
    }
  }
};

std::vector<std::pair<std::string, Builder>> builders(bool composed) {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("conv2d", [](Rng& rng) {
    Tensor r = rand(rng, {3, 6, 6});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::conv2d(g, v[0], v[1], v[2], 1, 1), r);
                },
                {rand(rng, {2, 6, 6}), rand(rng, {3, 2, 3, 3}), rand(rng, {3})}};
  });
  b.emplace_back("conv2d_stride2", [](Rng& rng) {
    Tensor r = rand(rng, {2, 4, 4});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::conv2d(g, v[0], v[1], v[2], 2, 1), r);
                },
                {rand(rng, {2, 7, 7}), rand(rng, {2, 2, 3, 3}), rand(rng, {2})}};
  });
  b.emplace_back("avg_pool2", [](Rng& rng) {
    return unary(rng, {3, 6, 6}, {3, 3, 3}, [](Graph& g, Var x) { return ops::avg_pool2(g, x); });
  });
  b.emplace_back("max_pool2", [](Rng& rng) {
    return unary(rng, {2, 6, 6}, {2, 3, 3}, [](Graph& g, Var x) { return ops::max_pool2(g, x); });
  });
  b.emplace_back("bilinear_up", [](Rng& rng) {
    return unary(rng, {2, 3, 5}, {2, 7, 8},
                 [](Graph& g, Var x) { return ops::bilinear_resize(g, x, 7, 8); });
  });
  b.emplace_back("bilinear_down", [](Rng& rng) {
    return unary(rng, {2, 8, 8}, {2, 3, 5},
                 [](Graph& g, Var x) { return ops::bilinear_resize(g, x, 3, 5); });
  });
  b.emplace_back("relu", [](Rng& rng) {
    return unary(rng, {4, 8, 8}, {4, 8, 8}, [](Graph& g, Var x) { return ops::relu(g, x); });
  });
  b.emplace_back("sigmoid", [](Rng& rng) {
    return unary(rng, {2, 4, 4}, {2, 4, 4}, [](Graph& g, Var x) { return ops::sigmoid(g, x); });
  });
  b.emplace_back("scale", [](Rng& rng) {
    return unary(rng, {2, 3, 3}, {2, 3, 3}, [](Graph& g, Var x) { return ops::scale(g, x, -1.7f); });
  });
  b.emplace_back("add", [](Rng& rng) {
    Tensor r = rand(rng, {2, 3, 3});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::add(g, v[0], v[1]), r);
                },
                {rand(rng, {2, 3, 3}), rand(rng, {2, 3, 3})}};
  });
  b.emplace_back("mul", [](Rng& rng) {
    Tensor r = rand(rng, {2, 3, 3});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::mul(g, v[0], v[1]), r);
                },
                {rand(rng, {2, 3, 3}), rand(rng, {2, 3, 3})}};
  });
  b.emplace_back("linear", [](Rng& rng) {
    Tensor r = rand(rng, {4});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::linear(g, v[0], v[1], v[2]), r);
                },
                {rand(rng, {5}), rand(rng, {4, 5}), rand(rng, {4})}};
  });
  b.emplace_back("concat_slice", [](Rng& rng) {
    Tensor r1 = rand(rng, {3, 3, 3}), r2 = rand(rng, {2, 3, 3});
    return Case{[r1, r2](Graph& g, std::span<const Var> v) {
                  const Var parts[] = {v[0], v[1]};
                  Var c = ops::concat_channels(g, parts);
                  return ops::add(g, project(g, c, r1),
                                  project(g, ops::slice_channels(g, c, 1, 2), r2));
                },
                {rand(rng, {1, 3, 3}), rand(rng, {2, 3, 3})}};
  });
  b.emplace_back("max_normalize", [](Rng& rng) {
    return unary(rng, {2, 4, 4}, {2, 4, 4}, [](Graph& g, Var x) {
      return ops::max_normalize(g, ops::sigmoid(g, x));
    });
  });
  b.emplace_back("reshape_broadcast", [](Rng& rng) {
    return unary(rng, {9}, {3, 3, 3}, [](Graph& g, Var x) {
      return ops::broadcast_channels(g, ops::reshape(g, x, {1, 3, 3}), 3);
    });
  });
  b.emplace_back("channel_weighted_sum", [](Rng& rng) {
    Tensor r = rand(rng, {1, 4, 4});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::channel_weighted_sum(g, v[0], v[1]), r);
                },
                {rand(rng, {3, 4, 4}), rand(rng, {3})}};
  });
  b.emplace_back("global_avg_pool", [](Rng& rng) {
    return unary(rng, {3, 4, 4}, {3}, [](Graph& g, Var x) { return ops::global_avg_pool(g, x); });
  });
  b.emplace_back("masked_avg_pool", [](Rng& rng) {
    Tensor r = rand(rng, {3});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::masked_avg_pool(g, v[0], ops::sigmoid(g, v[1])), r);
                },
                {rand(rng, {3, 4, 4}), rand(rng, {1, 4, 4})}};
  });
  b.emplace_back("cosine_map", [](Rng& rng) {
    Tensor r = rand(rng, {1, 4, 4});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, ops::cosine_map(g, v[0], v[1]), r);
                },
                {rand(rng, {3, 4, 4}), rand(rng, {3})}};
  });
  b.emplace_back("concat_vectors_dot", [](Rng& rng) {
    return Case{[](Graph& g, std::span<const Var> v) {
                  const Var parts[] = {v[0], v[1]};
                  return ops::dot(g, ops::concat_vectors(g, parts), v[2]);
                },
                {rand(rng, {3}), rand(rng, {2}), rand(rng, {5})}};
  });
  b.emplace_back("sum_mean", [](Rng& rng) {
    return Case{[](Graph& g, std::span<const Var> v) {
                  return ops::add(g, ops::sum(g, ops::mul(g, v[0], v[0])),
                                  ops::mean(g, ops::mul(g, v[1], v[1])));
                },
                {rand(rng, {2, 3, 3}), rand(rng, {4})}};
  });
  b.emplace_back("bce", [](Rng& rng) {
    return Case{[](Graph& g, std::span<const Var> v) {
                  return ops::bce(g, ops::sigmoid(g, v[0]), v[1]);
                },
                {rand(rng, {2, 4, 4}), rng.uniform_tensor({2, 4, 4}, 0.05f, 0.95f)}};
  });
  b.emplace_back("softmax_cross_entropy", [](Rng& rng) {
    const std::size_t target = rng.index(5);
    return Case{[target](Graph& g, std::span<const Var> v) {
                  return ops::softmax_cross_entropy(g, v[0], target);
                },
                {rand(rng, {5})}};
  });
  if (!composed) return b;

  b.emplace_back("octave_conv", [](Rng& rng) {
    Tensor rh = rand(rng, {3, 8, 8}), rl = rand(rng, {3, 4, 4});
    return Case{[rh, rl](Graph& g, std::span<const Var> v) {
                  const cfm::FrequencyPair out =
                      cfm::octave_conv(g, {v[0], v[1]}, {v[2], v[3], v[4], v[5], v[6], v[7]});
                  return ops::add(g, project(g, out.high, rh), project(g, out.low, rl));
                },
                {rand(rng, {2, 8, 8}), rand(rng, {2, 4, 4}), rand(rng, {3, 2, 3, 3}),
                 rand(rng, {3, 2, 3, 3}), rand(rng, {3, 2, 3, 3}), rand(rng, {3, 2, 3, 3}),
                 rand(rng, {3}), rand(rng, {3})}};
  });
  b.emplace_back("fam_realign", [](Rng& rng) {
    Tensor r = rand(rng, {2, 6, 6});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, cfm::fam_realign(g, {v[0], v[1]}, 6, 6), r);
                },
                {rand(rng, {2, 8, 8}), rand(rng, {2, 4, 4})}};
  });
  b.emplace_back("ncd", [](Rng& rng) {
    Tensor r = rand(rng, {3, 8, 8});
    return Case{[r](Graph& g, std::span<const Var> v) {
                  return project(g, cfm::ncd(g, v[0], v[1], v[2], v[3], v[4]).out, r);
                },
                {rand(rng, {2, 8, 8}), rand(rng, {2, 4, 4}), rand(rng, {2, 2, 2}),
                 rand(rng, {3, 6, 3, 3}), rand(rng, {3})}};
  });
  b.emplace_back("cfm_forward", [](Rng& rng) {
    const cfm::CfmConfig cfg;
    ParamStore store;
    cfm::init_backbone(store, "backbone", {}, rng);
    cfm::init_cfm(store, cfg, {}, rng);
    auto sc = std::make_shared<StoreCase>(store);
    Tensor r = rand(rng, {cfg.ncd_channels, cfg.grid, cfg.grid});
    Case c{[sc, r, cfg](Graph& g, std::span<const Var> v) {
             ParamStore empty;
             ParamBinder p(g, empty, true);
             for (std::size_t i = 0; i < sc->names.size(); ++i) p.bind(sc->names[i], v[i + 1]);
             return project(g, cfm::cfm_forward(p, cfg, v[0]), r);
           },
           {rand(rng, {3, 64, 64})},
           4};
    c.inputs.insert(c.inputs.end(), sc->values.begin(), sc->values.end());
    return c;
  });
  b.emplace_back("csm_fuse", [](Rng& rng) {
    const csm::CsmConfig cfg;
    ParamStore store;
    csm::init_adapter(store, cfg, rng);
    Tensor text = rand(rng, {cfg.text_dim});
    Tensor r = rand(rng, {4, cfg.grid, cfg.grid});
    return Case{[text, r, cfg](Graph& g, std::span<const Var> v) {
                  Var grid = csm::text_to_grid(g, g.constant(text), v[1], v[2], cfg.adapter_size);
                  return project(g, csm::csm_fuse(g, v[0], grid, cfg), r);
                },
                {rand(rng, {4, cfg.grid, cfg.grid}), store.get("csm.proj.w"),
                 store.get("csm.proj.b")},
                16};
  });
  b.emplace_back("seg_head", [](Rng& rng) {
    pseudo_mask::HeadConfig cfg;
    cfg.iterations = 2;
    cfg.hidden = 4;
    cfg.image_size = 16;
    ParamStore store;
    pseudo_mask::init_head(store, cfg, 3, rng);
    auto sc = std::make_shared<StoreCase>(store);
    Tensor target = blob(rng, 16);
    Case c{[sc, target, cfg](Graph& g, std::span<const Var> v) {
             ParamStore empty;
             ParamBinder p(g, empty, true);
             for (std::size_t i = 0; i < sc->names.size(); ++i) p.bind(sc->names[i], v[i + 2]);
             const pseudo_mask::HeadOutput out =
                 pseudo_mask::seg_head(p, cfg, v[0], ops::sigmoid(g, v[1]));
             const Var t = g.constant(target);
             return ops::add(g, ops::bce(g, out.image_masks[0], t),
                             ops::bce(g, out.image_masks[1], t));
           },
           {rand(rng, {3, 10, 10}), rand(rng, {1, 10, 10})}};
    c.inputs.insert(c.inputs.end(), sc->values.begin(), sc->values.end());
    return c;
  });
  for (const bool full : {true, false}) {
    b.emplace_back(full ? "episode_loss" : "episode_loss_baseline", [full](Rng& rng) {
      model::ModelConfig cfg;
      cfg.use_cfm = cfg.use_csm = full;
      cfg.image_size = 32;
      cfg.backbone.channels = {4, 8, 8};
      cfg.cfm.fam_channels = cfg.cfm.ncd_channels = 4;
      cfg.cfm.grid = cfg.csm.grid = 20;
      cfg.csm.adapter_size = 10;
      cfg.csm.text_dim = 16;
      cfg.head.iterations = 2;
      cfg.head.hidden = 4;
      cfg.head.image_size = 32;
      ParamStore store;
      model::init_model(store, cfg, rng);
      auto sc = std::make_shared<StoreCase>(store);
      auto images = std::make_shared<std::vector<model::ImageEntry>>();
      for (int i = 0; i < 2; ++i) {
        model::ImageEntry e;
        e.taps = {rng.uniform_tensor({4, 16, 16}, 0.0f, 1.0f),
                  rng.uniform_tensor({8, 8, 8}, 0.0f, 1.0f),
                  rng.uniform_tensor({8, 4, 4}, 0.0f, 1.0f)};
        e.cam_image = blob(rng, 32);
        e.cam_grid = blob(rng, 20);
        images->push_back(std::move(e));
      }
      csm::ClassEmbeddingTable table;
      table.class_names = {"a"};
      table.dim = cfg.csm.text_dim;
      table.vectors = rand(rng, {1, cfg.csm.text_dim});
      Case c{[sc, images, table, cfg](Graph& g, std::span<const Var> v) {
               ParamStore empty;
               ParamBinder p(g, empty, true);
               for (std::size_t i = 0; i < sc->names.size(); ++i) p.bind(sc->names[i], v[i]);
               model::EpisodeInputs in;
               in.support = {&(*images)[0]};
               in.query = &(*images)[1];
               const model::EpisodeOutputs out = model::forward_episode(p, cfg, table, in);
               return episodic::total_loss(g, out.support_masks, out.query_masks,
                                           {g.constant((*images)[0].cam_image)},
                                           g.constant((*images)[1].cam_image), 1.0f, 1.0f);
             },
             sc->values,
             6};
      return c;
    });
  }
  return b;
}

}  // namespace

std::vector<std::string> gradient_case_names(bool composed) {
  std::vector<std::string> names;
  for (const auto& [n, b] : builders(composed)) names.push_back(n);
  return names;
}

std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientCase> out;
  const auto cases = builders(options.composed);
  for (std::size_t s = 0; s < options.seeds; ++s) {
    const std::uint64_t seed = options.base_seed + s;
    for (const auto& [name, build] : cases) {
      Rng rng(derive_seed(seed, "gradient/" + name));
      Case c = build(rng);
      GradCheckOptions opt;
      opt.rel_tol = options.rel_tol;
      opt.max_coords_per_input = c.max_coords;
      out.push_back({name, seed, grad_check(c.f, c.inputs, opt)});
    }
  }
  return out;
}

}  // namespace afanet
