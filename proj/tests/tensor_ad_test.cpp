/* Copyright 2026 The LSCL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "lscl/autodiff.hpp"
#include "lscl/tensor.hpp"
#include "fd_cases.hpp"
#include "oracles.hpp"

namespace lscl::ad {
namespace {

TEST(RngTest, MatchesSplitmix64ReferenceStream) {
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next_u64(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06C45D188009454FULL);
}

TEST(RngTest, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.uniform(), b.uniform());
  }
}

TEST(RngTest, NormalMomentsAreSane) {
  Rng rng(7);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    ss += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.01);
}

TEST(RngTest, BetaStaysInUnitInterval) {
  Rng rng(3);
  double mean = 0;
  for (int i = 0; i < 20000; ++i) {
    const double b = rng.beta(0.2, 0.2);
    ASSERT_GE(b, 0.0);
    ASSERT_LE(b, 1.0);
    mean += b;
  }
  EXPECT_NEAR(mean / 20000, 0.5, 0.02);
}

TEST(TensorTest, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}), ShapeError);
}

TEST(PrimitiveTest, ReluExample) {
  Tape t;
  const NodeId x = t.leaf(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(t.value(relu(t, x)).vec(), (std::vector<double>{0, 0, 2}));
}

TEST(PrimitiveTest, ConvOfZeroInputIsZero) {
  Rng rng(1);
  Tape t;
  const NodeId x = t.leaf(Tensor({1, 1, 4, 4}));
  const NodeId w = t.leaf(oracle::random_tensor(rng, {3, 1, 3, 3}));
  const NodeId b = t.leaf(Tensor({3}));
  const Tensor& y = t.value(conv2d(t, x, w, b));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(PrimitiveTest, MaxPoolExample) {
  Tape t;
  const NodeId x = t.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  const Tensor& y = t.value(maxpool2(t, x));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(PrimitiveTest, ConvMatchesDirectLoops) {
  Rng rng(11);
  const Tensor x = oracle::random_tensor(rng, {2, 3, 6, 5});
  const Tensor w = oracle::random_tensor(rng, {4, 3, 3, 3});
  const Tensor b = oracle::random_tensor(rng, {4});
  Tape t;
  const Tensor& y = t.value(conv2d(t, t.leaf(x), t.leaf(w), t.leaf(b)));
  const Tensor ref = oracle::conv3x3(x, w, b);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(PrimitiveTest, ConvPreservesSpatialSize) {
  Rng rng(5);
  const Tensor w = oracle::random_tensor(rng, {2, 1, 3, 3});
  for (std::size_t s = 4; s <= 64; ++s) {
    Tape t;
    const NodeId y = conv2d(t, t.leaf(Tensor({1, 1, s, s})), t.leaf(w), t.leaf(Tensor({2})));
    ASSERT_EQ(t.value(y).shape(), (Shape{1, 2, s, s})) << "size " << s;
  }
}

TEST(PrimitiveTest, SoftmaxSumsToOne) {
  Rng rng(2);
  Tape t;
  const Tensor& p = t.value(softmax(t, t.leaf(oracle::random_tensor(rng, {2, 4, 3, 3}, -50, 50))));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t q = 0; q < 9; ++q) {
      double sum = 0;
      for (std::size_t c = 0; c < 4; ++c) sum += p[(s * 4 + c) * 9 + q];
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(PrimitiveTest, ShapeMismatchNamesKindAndShapes) {
  Tape t;
  const NodeId a = t.leaf(Tensor({2, 3}));
  const NodeId b = t.leaf(Tensor({3, 2}));
  try {
    add(t, a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[3x2]"), std::string::npos);
  }
}

TEST(PrimitiveTest, LeafKindIsNotRecordable) {
  Tape t;
  const NodeId a = t.leaf(Tensor({1}));
  EXPECT_THROW(t.record(Op::kLeaf, {a}), InvalidArgument);
}

TEST(PrimitiveTest, NonFiniteResultIsAnError) {
  Tape t;
  const NodeId a = t.leaf(Tensor({2}, {1.0, -1.0}));
  EXPECT_THROW(log(t, a), NumericError);
  EXPECT_THROW(t.leaf(Tensor({1}, std::nan(""))), NumericError);
}

TEST(PrimitiveTest, OneHotSelectRejectsBadClass) {
  Tape t;
  const NodeId a = t.leaf(Tensor({1, 2, 1, 1}));
  EXPECT_THROW(one_hot_select(t, a, {2}), InvalidArgument);
}

TEST(BackwardTest, SumGivesOnes) {
  Rng rng(1);
  Tape t;
  const NodeId x = t.leaf(oracle::random_tensor(rng, {2, 3, 4}));
  const Gradients g = backward(t, reduce_sum(t, x));
  EXPECT_EQ(g.at(x), Tensor::ones({2, 3, 4}));
}

TEST(BackwardTest, SquareAtThreeGivesSix) {
  Tape t;
  const NodeId x = t.leaf(Tensor({1}, {3.0}));
  const Gradients g = backward(t, reduce_sum(t, mul(t, x, x)));
  EXPECT_EQ(g.at(x)[0], 6.0);
}

TEST(BackwardTest, RootMustBeScalar) {
  Tape t;
  const NodeId x = t.leaf(Tensor({2}));
  EXPECT_THROW(backward(t, relu(t, x)), ShapeError);
}

TEST(BackwardTest, GradientShapesMatchValues) {
  Rng rng(4);
  Tape t;
  const NodeId x = t.leaf(oracle::random_tensor(rng, {1, 2, 4, 4}));
  const NodeId w = t.leaf(oracle::random_tensor(rng, {3, 2, 3, 3}));
  const NodeId b = t.leaf(oracle::random_tensor(rng, {3}));
  const NodeId h = relu(t, conv2d(t, x, w, b));
  const NodeId u = upsample2(t, maxpool2(t, h));
  const NodeId root = reduce_mean(t, softmax(t, concat(t, u, h)));
  const Gradients g = backward(t, root);
  std::size_t checked = 0;
  for (NodeId id = 0; id < t.size(); ++id) {
    if (!g.has(id)) continue;
    EXPECT_EQ(g.at(id).shape(), t.value(id).shape()) << "node " << id;
    ++checked;
  }
  EXPECT_EQ(checked, t.size());
}

TEST(FiniteDifferenceTest, LinearFunctionIsExact) {
  Rng rng(8);
  const Tensor x = oracle::random_tensor(rng, {3, 4});
  const double err = finite_difference_check([](Tape& t, NodeId in) { return reduce_sum(t, in); }, x);
  EXPECT_LT(err, 1e-9);
}

TEST(FiniteDifferenceTest, SquareAtOneTwo) {
  const Tensor x({2}, {1.0, 2.0});
  const ScalarFn f = [](Tape& t, NodeId in) { return reduce_sum(t, mul(t, in, in)); };
  Tape t;
  const NodeId in = t.leaf(x);
  EXPECT_EQ(backward(t, f(t, in)).at(in).vec(), (std::vector<double>{2.0, 4.0}));
  EXPECT_LT(finite_difference_check(f, x), 1e-8);
}

TEST(FiniteDifferenceTest, EveryPrimitiveMatchesCentralDifferences) {
  Rng rng(2024);
  for (const auto& c : primitive_cases()) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor x = kink_free_input(rng, c.shape, c.lo, c.hi);
      const double err = finite_difference_check(c.fn, x, {1e-5, 0, 0});
      EXPECT_LT(err, 1e-6) << c.name << " trial " << trial;
    }
  }
}

TEST(FiniteDifferenceTest, TwoLayerConvNet) {
  Rng rng(77);
  const Tensor w1 = oracle::random_tensor(rng, {4, 1, 3, 3});
  const Tensor b1 = oracle::random_tensor(rng, {4}, -0.1, 0.1);
  const Tensor w2 = oracle::random_tensor(rng, {3, 4, 3, 3});
  const Tensor b2 = oracle::random_tensor(rng, {3}, -0.1, 0.1);
  const Tensor x = oracle::random_tensor(rng, {1, 1, 6, 6});
  auto net = [&](Tape& t, NodeId in, NodeId k1) {
    const NodeId h = relu(t, conv2d(t, in, k1, t.leaf(b1, false)));
    const NodeId y = conv2d(t, h, t.leaf(w2, false), t.leaf(b2, false));
    return weighted_sum(t, softmax(t, y), 5);
  };
  const double err_x = finite_difference_check(
      [&](Tape& t, NodeId in) { return net(t, in, t.leaf(w1, false)); }, x);
  const double err_w = finite_difference_check(
      [&](Tape& t, NodeId k) { return net(t, t.leaf(x, false), k); }, w1);
  EXPECT_LT(err_x, 1e-6);
  EXPECT_LT(err_w, 1e-6);
}

TEST(DeterminismTest, SameOpsSameBits) {
  auto run = []() {
    Rng rng(9);
    Tape t;
    const NodeId x = t.leaf(oracle::random_tensor(rng, {1, 2, 8, 8}));
    const NodeId w = t.leaf(oracle::random_tensor(rng, {3, 2, 3, 3}));
    const NodeId b = t.leaf(oracle::random_tensor(rng, {3}));
    const NodeId root = reduce_sum(t, softmax(t, conv2d(t, x, w, b)));
    return backward(t, root).at(w);
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace lscl::ad
