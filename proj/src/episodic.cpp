// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "afanet/optim.hpp"

namespace afanet::episodic {

SplitConfig make_split(std::size_t fold, std::size_t num_classes, std::size_t classes_per_fold) {
  if (classes_per_fold == 0 || num_classes % classes_per_fold != 0)
    throw_invalid("split: class count must be a multiple of classes_per_fold");
  const std::size_t folds = num_classes / classes_per_fold;
  if (fold >= folds)
    throw_invalid("split: fold " + std::to_string(fold) + " out of range [0, " +
                  std::to_string(folds) + ")");
  SplitConfig s;
  s.fold = fold;
  s.classes_per_fold = classes_per_fold;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (c / classes_per_fold == fold)
      s.novel.push_back(c);
    else
      s.base.push_back(c);
  }
  for (std::size_t b : s.base)
    if (std::find(s.novel.begin(), s.novel.end(), b) != s.novel.end())
      throw Error(ErrorCode::kInternal, "split: base and novel classes overlap");
  return s;
}

Episode sample_episode(const data::Dataset& ds, const std::vector<std::size_t>& classes,
                       std::size_t k, Rng& rng) {
  if (k == 0) throw_invalid("sample_episode: need at least one support image");
  if (classes.empty()) throw_invalid("sample_episode: no classes to sample from");
  Episode e;
  e.class_id = classes[rng.index(classes.size())];
  std::vector<std::size_t> pool = ds.indices_of(e.class_id);
  if (pool.size() < k + 1)
    throw_invalid("sample_episode: class " + std::to_string(e.class_id) + " has " +
                  std::to_string(pool.size()) + " images, need " + std::to_string(k + 1));
  // Partial Fisher-Yates for k + 1 distinct picks.
  for (std::size_t i = 0; i <= k; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  e.support.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  e.query = pool[k];
  return e;
}

Var total_loss(Graph& g, const std::vector<std::vector<Var>>& support_masks,
               const std::vector<Var>& query_masks, const std::vector<Var>& pseudo_support,
               Var pseudo_query, float alpha, float beta) {
  if (alpha < 0.0f || beta < 0.0f) throw_invalid("total_loss: alpha and beta must be >= 0");
  if (support_masks.empty() || support_masks.size() != pseudo_support.size())
    throw_invalid("total_loss: one pseudo-mask per support shot required");
  const std::size_t n = query_masks.size();
  if (n == 0) throw_invalid("total_loss: no iterations");
  for (const auto& s : support_masks)
    if (s.size() != n)
      throw_invalid("total_loss: support and query iteration counts differ (" +
                    std::to_string(s.size()) + " vs " + std::to_string(n) + ")");
  const float shot_weight = alpha / static_cast<float>(support_masks.size());
  Var total;
  auto accumulate = [&](Var term) { total = total.valid() ? ops::add(g, total, term) : term; };
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < support_masks.size(); ++k)
      accumulate(ops::scale(g, ops::bce(g, support_masks[k][t], pseudo_support[k]), shot_weight));
    accumulate(ops::scale(g, ops::bce(g, query_masks[t], pseudo_query), beta));
  }
  return total;
}

model::EpisodeInputs episode_inputs(const Context& ctx, const Episode& e) {
  model::EpisodeInputs in;
  in.class_id = e.class_id;
  for (std::size_t i : e.support) in.support.push_back(&ctx.cache->at(i));
  in.query = &ctx.cache->at(e.query);
  return in;
}

TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const Context& ctx,
                  const SplitConfig& split, ParamStore params, const std::vector<Episode>& fixed,
                  const EpisodeObserver& observer) {
  mcfg.validate();
  if (tcfg.shots == 0) throw_invalid("train: shots must be >= 1");
  if (tcfg.alpha < 0.0f || tcfg.beta < 0.0f) throw_invalid("train: alpha and beta must be >= 0");
  if (!(tcfg.clip_norm >= 0.0f)) throw_invalid("train: clip_norm must be >= 0");
  TrainResult result;
  Sgd opt(tcfg.lr, tcfg.momentum, tcfg.clip_norm);
  Rng rng(derive_seed(tcfg.seed, "train/episodes"));
  for (std::size_t step = 0; step < tcfg.episodes; ++step) {
    const Episode e = fixed.empty() ? sample_episode(*ctx.dataset, split.base, tcfg.shots, rng)
                                    : fixed[step % fixed.size()];
    if (observer) observer(step, e);
    Graph g;
    ParamBinder p(g, params, true, model::frozen_prefixes());
    const model::EpisodeInputs in = episode_inputs(ctx, e);
    const model::EpisodeOutputs out = model::forward_episode(p, mcfg, *ctx.table, in);
    std::vector<Var> pseudo_s;
    for (const model::ImageEntry* s : in.support) pseudo_s.push_back(g.constant(s->cam_image));
    Var loss = total_loss(g, out.support_masks, out.query_masks, pseudo_s,
                          g.constant(in.query->cam_image), tcfg.alpha, tcfg.beta);
    const double value = g.value(loss)[0];
    if (!std::isfinite(value))
      throw Error(ErrorCode::kNumeric,
                  "train: non-finite loss at step " + std::to_string(step) + " (class " +
                      std::to_string(e.class_id) + ", query " + std::to_string(e.query) + ")");
    result.losses.push_back(value);
    g.backward(loss);
    opt.step(params, p);
  }
  result.params = std::move(params);
  return result;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, losses[i]);
    out += buf;
  }
  return out;
}

MiouResult miou(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt,
                const std::vector<std::size_t>& class_ids) {
  if (pred.empty()) throw_invalid("miou: empty input");
  if (pred.size() != gt.size() || pred.size() != class_ids.size())
    throw_invalid("miou: prediction, ground truth and class lists differ in length");
  struct Counts {
    std::uint64_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::size_t, Counts> counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].shape() != gt[i].shape())
      throw_shape("miou: pair " + std::to_string(i) + " has mismatched shapes");
    Counts& c = counts[class_ids[i]];
    for (std::size_t j = 0; j < pred[i].numel(); ++j) {
      const bool p = pred[i][j] >= 0.5f, t = gt[i][j] >= 0.5f;
      c.tp += p && t;
      c.fp += p && !t;
      c.fn += !p && t;
    }
  }
  MiouResult r;
  double sum = 0.0;
  for (const auto& [cls, c] : counts) {
    const std::uint64_t denom = c.tp + c.fp + c.fn;
    const double iou = denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
    r.per_class[cls] = iou;
    sum += iou;
  }
  r.mean = sum / static_cast<double>(counts.size());
  return r;
}

std::string EvalReport::to_json(const std::vector<std::string>& class_names) const {
  auto section = [&](const MiouResult& m) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [cls, iou] : m.per_class)
      per[cls < class_names.size() ? class_names[cls] : std::to_string(cls)] = iou;
    return nlohmann::json{{"miou", m.mean}, {"per_class", per}};
  };
  const nlohmann::json j = {{"episodes", episodes},
                            {"model", section(model)},
                            {"constant_foreground", section(constant_foreground)},
                            {"constant_background", section(constant_background)}};
  return j.dump(2);
}

EvalReport evaluate(const model::ModelConfig& mcfg, const ParamStore& params, const Context& ctx,
                    const std::vector<std::size_t>& classes, std::size_t episodes,
                    std::size_t shots, std::uint64_t seed) {
  if (episodes == 0) throw_invalid("evaluate: episode count must be positive");
  Rng rng(derive_seed(seed, "eval/episodes"));
  std::vector<Tensor> pred, gt, ones, zeros;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < episodes; ++i) {
    const Episode e = sample_episode(*ctx.dataset, classes, shots, rng);
    const Tensor& mask = ctx.dataset->samples[e.query].mask;
    pred.push_back(model::predict_query(mcfg, params, *ctx.table, episode_inputs(ctx, e)));
    gt.push_back(mask);
    ones.push_back(Tensor::ones(mask.shape()));
    zeros.push_back(Tensor::zeros(mask.shape()));
    ids.push_back(e.class_id);
  }
  EvalReport r;
  r.episodes = episodes;
  r.model = miou(pred, gt, ids);
  r.constant_foreground = miou(ones, gt, ids);
  r.constant_background = miou(zeros, gt, ids);
  return r;
}

}  // namespace afanet::episodic
