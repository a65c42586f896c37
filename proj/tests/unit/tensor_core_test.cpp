// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "afanet/gradcheck.hpp"
#include "afanet/graph.hpp"
#include "afanet/params.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace afanet {
namespace {

using testing::near_all;
using testing::rand_tensor;
using testing::run;

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_THROW(Tensor({2, 0}), Error);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>(3)), Error);
  EXPECT_EQ(t.reshaped({4, 6}).numel(), 24u);
  EXPECT_THROW(t.reshaped({5, 5}), Error);
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  Rng rng(1);
  const Tensor w = rand_tensor(rng, {1, 1, 3, 3});
  const Tensor out = run([&](Graph& g) {
    return ops::conv2d(g, g.constant(Tensor::zeros({1, 4, 4})), g.constant(w),
                       g.constant(Tensor::zeros({1})), 1, 1);
  });
  EXPECT_EQ(out, Tensor::zeros({1, 4, 4}));
}

TEST(Conv2d, OnesGiveNine) {
  const Tensor out = run([](Graph& g) {
    return ops::conv2d(g, g.constant(Tensor::ones({1, 3, 3})), g.constant(Tensor::ones({1, 1, 3, 3})),
                       g.constant(Tensor::zeros({1})), 1, 0);
  });
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_FLOAT_EQ(out[0], 9.0f);
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(2);
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      const Tensor x = rand_tensor(rng, {2, 5, 5});
      const Tensor w = rand_tensor(rng, {3, 2, 3, 3});
      const Tensor b = rand_tensor(rng, {3});
      const Tensor out = kernels::conv2d(x, w, &b, stride, pad);
      EXPECT_TRUE(near_all(out, oracle::conv2d(x, w, b, stride, pad), 1e-5f));
    }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Graph g;
  EXPECT_THROW(ops::conv2d(g, g.constant(Tensor::zeros({2, 4, 4})),
                           g.constant(Tensor::zeros({1, 3, 3, 3})), g.constant(Tensor::zeros({1})),
                           1, 1),
               Error);
}

TEST(Conv2d, RejectsEvenKernel) {
  Graph g;
  EXPECT_THROW(ops::conv2d(g, g.constant(Tensor::zeros({1, 4, 4})),
                           g.constant(Tensor::zeros({1, 1, 2, 2})), g.constant(Tensor::zeros({1})),
                           1, 0),
               Error);
}

TEST(AvgPool2, Examples) {
  const Tensor out =
      run([](Graph& g) { return ops::avg_pool2(g, g.constant(Tensor::from({1, 2, 2}, {1, 2, 3, 4}))); });
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_FLOAT_EQ(out[0], 2.5f);
  const Tensor c = kernels::avg_pool2(Tensor::full({3, 4, 4}, 1.75f));
  EXPECT_EQ(c, Tensor::full({3, 2, 2}, 1.75f));
}

TEST(AvgPool2, MatchesBlockMeans) {
  Rng rng(3);
  const Tensor x = rand_tensor(rng, {2, 6, 6});
  EXPECT_TRUE(near_all(kernels::avg_pool2(x), oracle::avg_pool2(x), 0.0f));
}

TEST(AvgPool2, RejectsOddSize) {
  EXPECT_THROW(kernels::avg_pool2(Tensor::zeros({1, 3, 4})), Error);
}

TEST(BilinearResize, ConstantsArePreserved) {
  EXPECT_TRUE(near_all(kernels::bilinear_resize(Tensor::full({1, 2, 2}, 5.0f), 4, 4),
                       Tensor::full({1, 4, 4}, 5.0f), 1e-6f));
  const Tensor c = Tensor::full({1, 4, 4}, 0.3f);
  EXPECT_TRUE(near_all(kernels::bilinear_resize(kernels::bilinear_resize(c, 2, 2), 4, 4), c, 1e-6f));
}

TEST(BilinearResize, RowMatchesScalarFormula) {
  const Tensor x = Tensor::from({1, 1, 2}, {0.0f, 1.0f});
  const Tensor out = kernels::bilinear_resize(x, 1, 4);
  // src = (i + 0.5) * 2 / 4 - 0.5 = -0.25, 0.25, 0.75, 1.25 -> clamp -> 0, .25, .75, 1
  EXPECT_TRUE(near_all(out, Tensor::from({1, 1, 4}, {0.0f, 0.25f, 0.75f, 1.0f}), 1e-6f));
  EXPECT_TRUE(near_all(out, oracle::bilinear_resize(x, 1, 4), 1e-6f));
}

TEST(BilinearResize, MatchesScalarOracleOnRandomSizes) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const std::size_t h = 1 + rng.index(9), w = 1 + rng.index(9);
    const std::size_t oh = 1 + rng.index(12), ow = 1 + rng.index(12);
    const Tensor x = rand_tensor(rng, {2, h, w});
    EXPECT_TRUE(near_all(kernels::bilinear_resize(x, oh, ow), oracle::bilinear_resize(x, oh, ow),
                         1e-6f));
  }
}

TEST(Relu, Examples) {
  EXPECT_EQ(run([](Graph& g) { return ops::relu(g, g.constant(Tensor::from({3}, {-1, 0, 2}))); }),
            Tensor::from({3}, {0, 0, 2}));
  EXPECT_EQ(run([](Graph& g) { return ops::relu(g, g.constant(Tensor::full({2, 2}, -3.0f))); }),
            Tensor::zeros({2, 2}));
  Rng rng(5);
  const Tensor x = rand_tensor(rng, {3, 4, 4});
  const Tensor y = run([&](Graph& g) { return ops::relu(g, g.constant(x)); });
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i] > 0.0f ? x[i] : 0.0f);
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Graph g;
  Var x = g.leaf(Tensor::zeros({3}), true);
  g.backward(ops::sum(g, ops::relu(g, x)));
  EXPECT_EQ(g.grad(x), Tensor::zeros({3}));
}

TEST(Elementwise, IdentitiesAndOracle) {
  Rng rng(6);
  const Tensor a = rand_tensor(rng, {2, 3, 3}), b = rand_tensor(rng, {2, 3, 3});
  EXPECT_EQ(run([&](Graph& g) { return ops::add(g, g.constant(a), g.constant(Tensor::zeros(a.shape()))); }),
            a);
  EXPECT_EQ(run([&](Graph& g) { return ops::mul(g, g.constant(a), g.constant(Tensor::ones(a.shape()))); }),
            a);
  const Tensor s = run([&](Graph& g) { return ops::add(g, g.constant(a), g.constant(b)); });
  const Tensor p = run([&](Graph& g) { return ops::mul(g, g.constant(a), g.constant(b)); });
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(s[i], a[i] + b[i], 1e-6f);
    EXPECT_NEAR(p[i], a[i] * b[i], 1e-6f);
  }
  Graph g;
  EXPECT_THROW(ops::add(g, g.constant(a), g.constant(Tensor::zeros({3, 3, 2}))), Error);
  EXPECT_THROW(ops::mul(g, g.constant(a), g.constant(Tensor::zeros({18}))), Error);
}

TEST(Linear, Examples) {
  Rng rng(7);
  const Tensor x = rand_tensor(rng, {4});
  Tensor eye = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0f;
  EXPECT_EQ(run([&](Graph& g) {
              return ops::linear(g, g.constant(x), g.constant(eye), g.constant(Tensor::zeros({4})));
            }),
            x);
  const Tensor b = rand_tensor(rng, {3});
  EXPECT_EQ(run([&](Graph& g) {
              return ops::linear(g, g.constant(x), g.constant(Tensor::zeros({3, 4})), g.constant(b));
            }),
            b);
  const Tensor w = rand_tensor(rng, {3, 4});
  const Tensor y =
      run([&](Graph& g) { return ops::linear(g, g.constant(x), g.constant(w), g.constant(b)); });
  for (std::size_t r = 0; r < 3; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < 4; ++c) acc += static_cast<double>(w[r * 4 + c]) * x[c];
    EXPECT_NEAR(y[r], acc, 1e-6);
  }
  Graph g;
  EXPECT_THROW(ops::linear(g, g.constant(x), g.constant(Tensor::zeros({3, 5})), g.constant(b)),
               Error);
}

TEST(ConcatChannels, OrderAndRoundTrip) {
  const Tensor a = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({1, 2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(run([&](Graph& g) {
              const Var parts[] = {g.constant(a)};
              return ops::concat_channels(g, parts);
            }),
            a);
  EXPECT_EQ(run([&](Graph& g) {
              const Var parts[] = {g.constant(a), g.constant(b)};
              return ops::concat_channels(g, parts);
            }),
            Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));

  Rng rng(8);
  const Tensor p0 = rand_tensor(rng, {1, 3, 3}), p1 = rand_tensor(rng, {2, 3, 3}),
               p2 = rand_tensor(rng, {3, 3, 3});
  Graph g;
  const Var parts[] = {g.constant(p0), g.constant(p1), g.constant(p2)};
  Var cat = ops::concat_channels(g, parts);
  EXPECT_EQ(g.value(ops::slice_channels(g, cat, 0, 1)), p0);
  EXPECT_EQ(g.value(ops::slice_channels(g, cat, 1, 2)), p1);
  EXPECT_EQ(g.value(ops::slice_channels(g, cat, 3, 3)), p2);

  const Var bad[] = {g.constant(p0), g.constant(Tensor::zeros({1, 2, 3}))};
  EXPECT_THROW(ops::concat_channels(g, bad), Error);
}

TEST(MaxNormalize, Examples) {
  EXPECT_TRUE(near_all(kernels::max_normalize(Tensor::from({3}, {0, 2, 4})),
                       Tensor::from({3}, {0, 0.5f, 1}), 0.0f));
  EXPECT_EQ(kernels::max_normalize(Tensor::zeros({1, 3, 3})), Tensor::zeros({1, 3, 3}));
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const Tensor out = kernels::max_normalize(rand_tensor(rng, {1, 5, 5}, 0.0f, 3.0f));
    EXPECT_NEAR(out.max_value(), 1.0f, 1e-6f);
    EXPECT_GE(out.min_value(), 0.0f);
  }
}

TEST(Bce, Examples) {
  const float half = run([](Graph& g) {
    return ops::bce(g, g.constant(Tensor::full({4}, 0.5f)), g.constant(Tensor::ones({4})));
  })[0];
  EXPECT_NEAR(half, std::log(2.0f), 1e-6f);
  const float edge = run([](Graph& g) {
    const Tensor p = Tensor::full({4}, 1.0f - 1e-7f);
    return ops::bce(g, g.constant(p), g.constant(p));
  })[0];
  EXPECT_LT(edge, 1e-5f);
  Rng rng(10);
  const Tensor p = rand_tensor(rng, {1, 6, 6}, 0.01f, 0.99f), t = rand_tensor(rng, {1, 6, 6}, 0, 1);
  const float v = run([&](Graph& g) { return ops::bce(g, g.constant(p), g.constant(t)); })[0];
  EXPECT_NEAR(v, oracle::bce(p, t), 1e-6);
  Graph g;
  EXPECT_THROW(ops::bce(g, g.constant(p), g.constant(Tensor::zeros({36}))), Error);
}

TEST(Graph, UnreachedLeafHasZeroGradient) {
  Graph g;
  Var a = g.leaf(Tensor::full({2}, 3.0f), true);
  Var b = g.leaf(Tensor::full({2}, 4.0f), true);
  Var unused = ops::mul(g, b, b);
  (void)unused;
  g.backward(ops::sum(g, ops::mul(g, a, a)));
  EXPECT_EQ(g.grad(a), Tensor::full({2}, 6.0f));
  EXPECT_EQ(g.grad(b), Tensor::zeros({2}));
}

TEST(Graph, ReplayVisitsEachOperationOnce) {
  Graph g;
  Var x = g.leaf(Tensor::full({3}, 1.0f), true);
  Var y = ops::scale(g, x, 2.0f);        // 1
  Var z = ops::add(g, y, y);             // 2
  Var s = ops::sum(g, ops::relu(g, z));  // 3, 4
  EXPECT_EQ(g.backward(s), 4u);
  EXPECT_EQ(g.grad(x), Tensor::full({3}, 4.0f));
  // A second backward starts from fresh buffers.
  EXPECT_EQ(g.backward(s), 4u);
  EXPECT_EQ(g.grad(x), Tensor::full({3}, 4.0f));
}

TEST(Graph, InferenceRecordsNoClosures) {
  Graph g;
  Var x = g.constant(Tensor::ones({3}));
  EXPECT_EQ(g.backward(ops::sum(g, ops::relu(g, x))), 0u);
}

TEST(Ops, Deterministic) {
  Rng rng(11);
  const Tensor x = rand_tensor(rng, {2, 8, 8}), w = rand_tensor(rng, {4, 2, 3, 3}),
               b = rand_tensor(rng, {4});
  auto f = [&](Graph& g) {
    Var y = ops::conv2d(g, g.constant(x), g.constant(w), g.constant(b), 1, 1);
    return ops::bilinear_resize(g, ops::sigmoid(g, y), 13, 7);
  };
  EXPECT_TRUE(bitwise_equal(run(f), run(f)));
}

TEST(GradCheck, SumHasUnitGradient) {
  Rng rng(12);
  const GradCheckReport r =
      grad_check([](Graph& g, std::span<const Var> v) { return ops::sum(g, v[0]); },
                 {rand_tensor(rng, {2, 3})});
  EXPECT_TRUE(r.passed) << r.message;
  EXPECT_LT(r.max_rel_error(), 1e-3f);
}

TEST(GradCheck, ReluConvExample) {
  Rng rng(13);
  const GradCheckReport r = grad_check(
      [](Graph& g, std::span<const Var> v) {
        return ops::sum(g, ops::relu(g, ops::conv2d(g, v[0], v[1], v[2], 1, 1)));
      },
      {rand_tensor(rng, {1, 4, 4}), rand_tensor(rng, {1, 1, 3, 3}), rand_tensor(rng, {1})});
  EXPECT_TRUE(r.passed) << r.message;
}

TEST(GradCheck, BceSigmoidExample) {
  Rng rng(14);
  const Tensor t = rand_tensor(rng, {1, 4, 4}, 0.0f, 1.0f);
  const GradCheckReport r = grad_check(
      [t](Graph& g, std::span<const Var> v) {
        return ops::bce(g, ops::sigmoid(g, v[0]), g.constant(t));
      },
      {rand_tensor(rng, {1, 4, 4})});
  EXPECT_TRUE(r.passed) << r.message;
}

TEST(GradCheck, DetectsWrongGradient) {
  // Forward is x*x but the recorded backward claims 3x.
  const auto f = [](Graph& g, std::span<const Var> v) {
    const Tensor& x = g.value(v[0]);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * x[i];
    const Var ins[] = {v[0]};
    Var out = g.record(std::move(y), ins, [in = v[0]](Graph& gr, Var, const Tensor& dout) {
      const Tensor& xv = gr.value(in);
      Tensor d(xv.shape());
      for (std::size_t i = 0; i < xv.numel(); ++i) d[i] = 3.0f * xv[i] * dout[i];
      gr.accumulate(in, d);
    });
    return ops::sum(g, out);
  };
  Rng rng(15);
  EXPECT_FALSE(grad_check(f, {rand_tensor(rng, {4})}).passed);
}

TEST(GradCheck, ReportsNonFinite) {
  const GradCheckReport r = grad_check(
      [](Graph& g, std::span<const Var> v) {
        return ops::sum(g, ops::mul(g, v[0], g.constant(Tensor::full({2}, INFINITY))));
      },
      {Tensor::ones({2})});
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.finite);
}

}  // namespace
}  // namespace afanet
