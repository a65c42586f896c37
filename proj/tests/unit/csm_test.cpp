// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <limits>

#include <gtest/gtest.h>

#include "afanet/csm.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace afanet::csm {
namespace {

using testing::near_all;
using testing::rand_tensor;

ClassEmbeddingTable small_table(Rng& rng, std::size_t classes, std::size_t dim) {
  ClassEmbeddingTable t;
  for (std::size_t i = 0; i < classes; ++i) t.class_names.push_back("c" + std::to_string(i));
  t.dim = dim;
  t.vectors = rand_tensor(rng, {classes, dim});
  return t;
}

TEST(TextToGrid, ZeroWeightsGiveBiasGrid) {
  Graph g;
  Var out = text_to_grid(g, g.constant(Tensor::ones({16})), g.constant(Tensor::zeros({25, 16})),
                         g.constant(Tensor::ones({25})), 5);
  EXPECT_EQ(g.value(out), Tensor::ones({1, 5, 5}));
}

TEST(TextToGrid, MatchesRowMajorMatVec) {
  Rng rng(1);
  const Tensor t = rand_tensor(rng, {12}), w = rand_tensor(rng, {9, 12}), b = rand_tensor(rng, {9});
  Graph g;
  const Tensor out =
      g.value(text_to_grid(g, g.constant(t), g.constant(w), g.constant(b), 3));
  ASSERT_EQ(out.shape(), (Shape{1, 3, 3}));
  for (std::size_t r = 0; r < 9; ++r) {
    double acc = b[r];
    for (std::size_t k = 0; k < 12; ++k) acc += static_cast<double>(w[r * 12 + k]) * t[k];
    EXPECT_NEAR(out[r], acc, 1e-5) << "cell " << r;
  }
}

TEST(TextToGrid, RejectsWrongProjectionRows) {
  Graph g;
  EXPECT_THROW(text_to_grid(g, g.constant(Tensor::ones({4})), g.constant(Tensor::zeros({24, 4})),
                            g.constant(Tensor::zeros({24})), 5),
               Error);
}

TEST(CsmFuse, Examples) {
  CsmConfig cfg;
  Graph g;
  EXPECT_EQ(g.value(csm_fuse(g, g.constant(Tensor::ones({3, 50, 50})),
                             g.constant(Tensor::ones({1, 25, 25})), cfg)),
            Tensor::ones({3, 50, 50}));
  EXPECT_EQ(g.value(csm_fuse(g, g.constant(Tensor::zeros({3, 50, 50})),
                             g.constant(Tensor::full({1, 25, 25}, 7.0f)), cfg)),
            Tensor::zeros({3, 50, 50}));
  for (float a : {-2.0f, 0.5f, 3.0f})
    for (float b : {-1.0f, 0.25f, 4.0f}) {
      const Tensor out = g.value(csm_fuse(g, g.constant(Tensor::full({2, 50, 50}, a)),
                                          g.constant(Tensor::full({1, 25, 25}, b)), cfg));
      EXPECT_TRUE(near_all(out, Tensor::full({2, 50, 50}, a * b), 1e-5f)) << a << " " << b;
    }
}

TEST(CsmFuse, MatchesResizeMultiplyResize) {
  Rng rng(2);
  for (std::size_t s : {20u, 25u, 50u}) {
    CsmConfig cfg;
    cfg.adapter_size = s;
    const Tensor f = rand_tensor(rng, {3, 50, 50}), t = rand_tensor(rng, {1, s, s});
    Graph g;
    const Tensor out = g.value(csm_fuse(g, g.constant(f), g.constant(t), cfg));
    Tensor down = oracle::bilinear_resize(f, s, s);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < s * s; ++i) down[c * s * s + i] *= t[i];
    EXPECT_TRUE(near_all(out, oracle::bilinear_resize(down, 50, 50), 1e-5f)) << "s=" << s;
  }
}

TEST(CsmFuse, ShapeContractForAdapterSizes) {
  for (std::size_t s : {20u, 25u, 50u}) {
    CsmConfig cfg;
    cfg.adapter_size = s;
    Graph g;
    Var out = csm_fuse(g, g.constant(Tensor::ones({8, 50, 50})), g.constant(Tensor::ones({1, s, s})),
                       cfg);
    EXPECT_EQ(g.shape(out), (Shape{8, 50, 50}));
  }
}

TEST(CsmFuse, RejectsMismatchedGrids) {
  CsmConfig cfg;
  Graph g;
  EXPECT_THROW(csm_fuse(g, g.constant(Tensor::ones({2, 40, 40})),
                        g.constant(Tensor::ones({1, 25, 25})), cfg),
               Error);
  EXPECT_THROW(csm_fuse(g, g.constant(Tensor::ones({2, 50, 50})),
                        g.constant(Tensor::ones({1, 20, 20})), cfg),
               Error);
}

TEST(CsmFuse, IdentityAdapterAtFullGridIsElementwiseProduct) {
  Rng rng(3);
  CsmConfig cfg;
  cfg.adapter_size = 50;
  const Tensor f = rand_tensor(rng, {2, 50, 50}), t = rand_tensor(rng, {1, 50, 50});
  Graph g;
  const Tensor out = g.value(csm_fuse(g, g.constant(f), g.constant(t), cfg));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2500; ++i) EXPECT_NEAR(out[c * 2500 + i], f[c * 2500 + i] * t[i], 1e-6);
}

class CsmForward : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(4);
    cfg_.text_dim = 32;
    init_adapter(store_, cfg_, rng);
    table_ = small_table(rng, 4, 32);
    fs_ = rand_tensor(rng, {3, 50, 50});
    fq_ = rand_tensor(rng, {3, 50, 50});
  }
  std::pair<Tensor, Tensor> run(std::size_t cls) {
    Graph g;
    ParamBinder p(g, store_, false);
    auto [s, q] = csm_forward(p, cfg_, g.constant(fs_), g.constant(fq_), cls, table_);
    return {g.value(s), g.value(q)};
  }
  CsmConfig cfg_;
  ParamStore store_;
  ClassEmbeddingTable table_;
  Tensor fs_, fq_;
};

TEST_F(CsmForward, SameInputsGiveBitwiseSameOutputs) {
  const auto a = run(1), b = run(1);
  EXPECT_TRUE(bitwise_equal(a.first, b.first));
  EXPECT_TRUE(bitwise_equal(a.second, b.second));
}

TEST_F(CsmForward, ClassSelectsTheModulation) {
  EXPECT_GT(max_abs_diff(run(0).second, run(2).second), 0.0f);
}

TEST_F(CsmForward, UnknownClassRejected) { EXPECT_THROW(run(4), Error); }

TEST_F(CsmForward, InitialisedAdapterIsNearIdentity) {
  // unit bias plus small weights
  const auto [s, q] = run(0);
  Graph g;
  const Tensor round = g.value(
      ops::bilinear_resize(g, ops::bilinear_resize(g, g.constant(fq_), 25, 25), 50, 50));
  EXPECT_LT(max_abs_diff(q, round), 0.5f);
}

TEST(EmbeddingTable, RowAndValidate) {
  Rng rng(5);
  ClassEmbeddingTable t = small_table(rng, 3, 4);
  EXPECT_NO_THROW(t.validate());
  const Tensor r = t.row(2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r[i], t.vectors[8 + i]);
  EXPECT_THROW(t.row(3), Error);
  t.vectors[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(t.validate(), Error);
  t.dim = 5;
  EXPECT_THROW(t.validate(), Error);
}

}  // namespace
}  // namespace afanet::csm
