// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <memory>
#include <set>

#include <gtest/gtest.h>

#include "afanet/episodic.hpp"
#include "afanet/pipeline.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace afanet::episodic {
namespace {

using testing::rand_tensor;

TEST(Split, FoldsPartitionClasses) {
  std::set<std::size_t> novel_union;
  for (std::size_t fold = 0; fold < 4; ++fold) {
    const SplitConfig s = make_split(fold, 8);
    EXPECT_EQ(s.base.size(), 6u);
    EXPECT_EQ(s.novel.size(), 2u);
    for (std::size_t n : s.novel) {
      EXPECT_EQ(std::count(s.base.begin(), s.base.end(), n), 0);
      novel_union.insert(n);
    }
  }
  EXPECT_EQ(novel_union.size(), 8u);
  EXPECT_THROW(make_split(4, 8), Error);
  EXPECT_THROW(make_split(0, 7), Error);
}

data::Dataset tiny_dataset() {
  data::GenOptions o;
  o.per_class = 6;
  o.backgrounds = 4;
  return data::render_dataset(o);
}

TEST(SampleEpisode, ProtocolHolds) {
  const data::Dataset ds = tiny_dataset();
  const std::vector<std::size_t> classes{1, 3, 5};
  Rng rng(1);
  for (int n = 0; n < 200; ++n) {
    const std::size_t k = 1 + static_cast<std::size_t>(n % 5);
    const Episode e = sample_episode(ds, classes, k, rng);
    EXPECT_EQ(std::count(classes.begin(), classes.end(), e.class_id), 1);
    ASSERT_EQ(e.support.size(), k);
    std::set<std::size_t> seen(e.support.begin(), e.support.end());
    seen.insert(e.query);
    EXPECT_EQ(seen.size(), k + 1);
    for (std::size_t i : seen) EXPECT_EQ(ds.samples[i].class_id, e.class_id);
  }
  EXPECT_THROW(sample_episode(ds, classes, 6, rng), Error);
  EXPECT_THROW(sample_episode(ds, classes, 0, rng), Error);
  EXPECT_THROW(sample_episode(ds, {}, 1, rng), Error);
}

TEST(SampleEpisode, SeedDetermined) {
  const data::Dataset ds = tiny_dataset();
  Rng a(9), b(9);
  for (int n = 0; n < 50; ++n) {
    const Episode x = sample_episode(ds, {0, 1, 2, 3}, 2, a);
    const Episode y = sample_episode(ds, {0, 1, 2, 3}, 2, b);
    EXPECT_EQ(x.class_id, y.class_id);
    EXPECT_EQ(x.support, y.support);
    EXPECT_EQ(x.query, y.query);
  }
}

TEST(SampleEpisode, ClassFrequencyNearUniform) {
  const data::Dataset ds = tiny_dataset();
  const std::vector<std::size_t> classes{0, 2, 4, 6};
  Rng rng(2);
  std::map<std::size_t, int> count;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++count[sample_episode(ds, classes, 1, rng).class_id];
  const double expect = n / 4.0, sigma = std::sqrt(n * 0.25 * 0.75);
  for (std::size_t c : classes) EXPECT_LT(std::fabs(count[c] - expect), 3 * sigma) << c;
}

struct LossInputs {
  std::vector<Tensor> s0, s1, q;  // per iteration: shot 0, shot 1, query
  Tensor p0, p1, pq;
};

LossInputs loss_inputs(Rng& rng, std::size_t iters) {
  LossInputs in;
  for (std::size_t t = 0; t < iters; ++t) {
    in.s0.push_back(rand_tensor(rng, {1, 6, 6}, 0.05f, 0.95f));
    in.s1.push_back(rand_tensor(rng, {1, 6, 6}, 0.05f, 0.95f));
    in.q.push_back(rand_tensor(rng, {1, 6, 6}, 0.05f, 0.95f));
  }
  in.p0 = rand_tensor(rng, {1, 6, 6}, 0, 1);
  in.p1 = rand_tensor(rng, {1, 6, 6}, 0, 1);
  in.pq = rand_tensor(rng, {1, 6, 6}, 0, 1);
  return in;
}

double loss_value(const LossInputs& in, float alpha, float beta) {
  Graph g;
  std::vector<std::vector<Var>> s(2);
  std::vector<Var> q;
  for (std::size_t t = 0; t < in.q.size(); ++t) {
    s[0].push_back(g.constant(in.s0[t]));
    s[1].push_back(g.constant(in.s1[t]));
    q.push_back(g.constant(in.q[t]));
  }
  return g.value(total_loss(g, s, q, {g.constant(in.p0), g.constant(in.p1)}, g.constant(in.pq),
                            alpha, beta))[0];
}

TEST(TotalLoss, MatchesOracleSum) {
  Rng rng(3);
  const LossInputs in = loss_inputs(rng, 3);
  double expect = 0.0;
  for (std::size_t t = 0; t < 3; ++t)
    expect += 0.7 * 0.5 * (oracle::bce(in.s0[t], in.p0) + oracle::bce(in.s1[t], in.p1)) +
              1.3 * oracle::bce(in.q[t], in.pq);
  EXPECT_NEAR(loss_value(in, 0.7f, 1.3f), expect, 1e-4 * expect);
}

TEST(TotalLoss, ZeroWeightsGiveZero) {
  Rng rng(4);
  EXPECT_EQ(loss_value(loss_inputs(rng, 2), 0.0f, 0.0f), 0.0);
}

TEST(TotalLoss, LinearInWeights) {
  Rng rng(5);
  for (int n = 0; n < 20; ++n) {
    const LossInputs in = loss_inputs(rng, 3);
    const float a = rng.uniform(0.1f, 2.0f), b = rng.uniform(0.1f, 2.0f);
    const double big = loss_value(in, 2 * a, b);
    const double lhs = big - loss_value(in, a, b);
    const double rhs = loss_value(in, a, 0.0f);
    // float32 sums: 1e-6 per unit of the largest operand
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::max(1.0, big));
  }
}

TEST(TotalLoss, GradientVanishesAtTargets) {
  Rng rng(6);
  Graph g;
  const Tensor target = rand_tensor(rng, {1, 6, 6}, 0.1f, 0.9f);
  Tensor logit(target.shape());
  for (std::size_t i = 0; i < target.numel(); ++i) logit[i] = std::log(target[i] / (1 - target[i]));
  std::vector<Var> logits, qs;
  std::vector<std::vector<Var>> ss(1);
  for (int t = 0; t < 6; ++t) logits.push_back(g.leaf(logit, true));
  for (int t = 0; t < 3; ++t) {
    ss[0].push_back(ops::sigmoid(g, logits[2 * t]));
    qs.push_back(ops::sigmoid(g, logits[2 * t + 1]));
  }
  g.backward(total_loss(g, ss, qs, {g.constant(target)}, g.constant(target), 1.0f, 1.0f));
  for (Var v : logits) EXPECT_LT(max_abs_diff(g.grad(v), Tensor::zeros(target.shape())), 1e-4f);
}

TEST(TotalLoss, RejectsBadArguments) {
  Graph g;
  Var m = g.constant(Tensor::full({1, 2, 2}, 0.5f));
  EXPECT_THROW(total_loss(g, {{m}}, {m}, {m}, m, -1.0f, 1.0f), Error);
  EXPECT_THROW(total_loss(g, {{m, m}}, {m}, {m}, m, 1.0f, 1.0f), Error);
  EXPECT_THROW(total_loss(g, {{m}}, {m}, {}, m, 1.0f, 1.0f), Error);
}

TEST(Miou, HalfPlanesGiveOneThird) {
  Tensor left({1, 4, 4}), top({1, 4, 4});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      left.at(0, y, x) = x < 2 ? 1.0f : 0.0f;
      top.at(0, y, x) = y < 2 ? 1.0f : 0.0f;
    }
  const MiouResult r = miou({left}, {top}, {3});
  EXPECT_NEAR(r.mean, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class.at(3), 1.0 / 3.0, 1e-12);
}

TEST(Miou, PerfectAndEmpty) {
  const Tensor m = Tensor::from({1, 1, 4}, {1, 0, 1, 0});
  EXPECT_EQ(miou({m}, {m}, {0}).mean, 1.0);
  EXPECT_EQ(miou({Tensor::zeros({1, 1, 4})}, {Tensor::zeros({1, 1, 4})}, {0}).mean, 1.0);
  EXPECT_EQ(miou({Tensor::ones({1, 1, 4})}, {Tensor::zeros({1, 1, 4})}, {0}).mean, 0.0);
  EXPECT_THROW(miou({}, {}, {}), Error);
  EXPECT_THROW(miou({m}, {Tensor::zeros({1, 2, 2})}, {0}), Error);
}

TEST(Miou, MatchesConfusionOracle) {
  Rng rng(7);
  for (int n = 0; n < 30; ++n) {
    std::vector<Tensor> pred, gt;
    std::vector<std::size_t> ids;
    for (int i = 0; i < 6; ++i) {
      pred.push_back(rand_tensor(rng, {1, 5, 5}, 0, 1));
      gt.push_back(oracle::bilinear_resize(rand_tensor(rng, {1, 2, 2}, 0, 1), 5, 5));
      ids.push_back(rng.index(3));
    }
    const MiouResult r = miou(pred, gt, ids);
    const oracle::MiouOracle o = oracle::miou(pred, gt, ids);
    EXPECT_NEAR(r.mean, o.mean, 1e-12);
    for (std::size_t i = 0; i < o.classes.size(); ++i)
      EXPECT_NEAR(r.per_class.at(o.classes[i]), o.iou[i], 1e-12);
  }
}

TEST(LossCsv, Format) {
  EXPECT_EQ(loss_csv({0.5, 0.25}), "step,loss\n0,0.5\n1,0.25\n");
}

// One small pretrained context shared by the training tests below.
class Training : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = std::make_unique<pipeline::RunConfig>();
    cfg_->data.per_class = 8;
    cfg_->data.backgrounds = 8;
    cfg_->pretrain.steps = 120;
    cfg_->model.head.iterations = 2;
    prep_ = std::make_unique<pipeline::Prepared>(pipeline::prepare(*cfg_));
  }
  static void TearDownTestSuite() {
    prep_.reset();
    cfg_.reset();
  }
  static TrainResult fit(std::size_t episodes, float lr = 1e-2f, const EpisodeObserver& obs = {}) {
    TrainConfig t = cfg_->train;
    t.episodes = episodes;
    t.lr = lr;
    return train(cfg_->model, t, prep_->context(), prep_->split,
                 pipeline::initial_params(*cfg_, prep_->frozen), {}, obs);
  }
  static std::unique_ptr<pipeline::RunConfig> cfg_;
  static std::unique_ptr<pipeline::Prepared> prep_;
};

std::unique_ptr<pipeline::RunConfig> Training::cfg_;
std::unique_ptr<pipeline::Prepared> Training::prep_;

TEST_F(Training, ZeroLearningRateLeavesParameters) {
  const TrainResult r = fit(5, 0.0f);
  EXPECT_TRUE(r.params == pipeline::initial_params(*cfg_, prep_->frozen));
  EXPECT_EQ(r.losses.size(), 5u);
}

TEST_F(Training, SeededRunsGiveBitwiseLosses) {
  const TrainResult a = fit(10), b = fit(10);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_TRUE(a.params == b.params);
}

TEST_F(Training, NeverSamplesNovelClasses) {
  std::size_t seen = 0;
  fit(60, 1e-2f, [&](std::size_t, const Episode& e) {
    ++seen;
    EXPECT_EQ(std::count(prep_->split.novel.begin(), prep_->split.novel.end(), e.class_id), 0);
  });
  EXPECT_EQ(seen, 60u);
}

TEST_F(Training, FrozenParametersUntouched) {
  const TrainResult r = fit(10);
  for (const auto& [name, t] : prep_->frozen.tensors())
    EXPECT_TRUE(bitwise_equal(r.params.get(name), t)) << name;
}

TEST_F(Training, EvaluateCountsAndDeterminism) {
  const ParamStore params = pipeline::initial_params(*cfg_, prep_->frozen);
  const EvalReport a =
      evaluate(cfg_->model, params, prep_->context(), prep_->split.novel, 12, 1, 3);
  const EvalReport b =
      evaluate(cfg_->model, params, prep_->context(), prep_->split.novel, 12, 1, 3);
  EXPECT_EQ(a.episodes, 12u);
  EXPECT_EQ(a.model.mean, b.model.mean);
  for (const auto& [cls, v] : a.model.per_class) {
    EXPECT_EQ(std::count(prep_->split.novel.begin(), prep_->split.novel.end(), cls), 1);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(evaluate(cfg_->model, params, prep_->context(), prep_->split.novel, 0, 1, 3), Error);
}

TEST_F(Training, TrainedBeatsUntrainedOnBaseClasses) {
  const ParamStore init = pipeline::initial_params(*cfg_, prep_->frozen);
  const TrainResult r = fit(300);
  const double before =
      evaluate(cfg_->model, init, prep_->context(), prep_->split.base, 60, 1, 11).model.mean;
  const double after =
      evaluate(cfg_->model, r.params, prep_->context(), prep_->split.base, 60, 1, 11).model.mean;
  EXPECT_GE(after, before);
}

}  // namespace
}  // namespace afanet::episodic
