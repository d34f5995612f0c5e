/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rtdetr/errors.hpp"
#include "rtdetr/gradcheck.hpp"
#include "rtdetr/rng.hpp"
#include "rtdetr/tensor.hpp"

namespace rtdetr {
namespace {

Tensor random_param(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// sum(f(..) * w) for fixed random w, so no op output is summed to a constant.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed, 99);
  Tensor w(y.dims());
  for (double& v : w.mutable_data()) v = rng.uniform(0.5, 1.5);
  return sum(mul(y, w));
}

void expect_gradcheck(const std::function<Tensor()>& f, std::vector<NamedTensor> params) {
  const GradReport r = finite_diff_check(f, params, 1e-5);
  EXPECT_TRUE(r.passed(1e-4)) << "max rel " << r.max_rel_error << " skipped " << r.skipped;
  // The roundoff allowance matters only for tiny gradients; unit-scale ops
  // must also pass without it.
  EXPECT_LT(r.max_raw_rel_error, 1e-4);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor i2 = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor c = matmul(i2, a);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandArithmetic) {
  const Tensor c = matmul(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::matrix(2, 1, {5, 6}));
  ASSERT_EQ(c.dims(), (Shape{2, 1}));
  EXPECT_EQ(c.at(0, 0), 17.0);
  EXPECT_EQ(c.at(1, 0), 39.0);
}

TEST(Matmul, ZeroAnnihilates) {
  const Tensor c = matmul(Tensor(Shape{2, 2}), Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  ASSERT_EQ(c.dims(), (Shape{2, 3}));
  for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos);
    EXPECT_NE(msg.find("3"), std::string::npos);
  }
}

TEST(Softmax, SymmetricInputIsUniform) {
  const Tensor s = softmax(Tensor::vector({0, 0}), 0);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
}

TEST(Softmax, MatchesDirectExponentiation) {
  const Tensor s = softmax(Tensor::vector({1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.at(i), std::exp(static_cast<double>(i + 1)) / z, 1e-15);
  }
  EXPECT_NEAR(s.at(0), 0.090031, 5e-7);
  EXPECT_NEAR(s.at(1), 0.244728, 5e-7);
  EXPECT_NEAR(s.at(2), 0.665241, 5e-7);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(6);
    for (double& v : x) v = rng.uniform(-5, 5);
    const double c = rng.uniform(-100, 100);
    std::vector<double> xc = x;
    for (double& v : xc) v += c;
    const Tensor a = softmax(Tensor::vector(x), 0), b = softmax(Tensor::vector(xc), 0);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
  }
}

TEST(Softmax, RowsSumToOneForLargeMagnitudes) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    Tensor x(Shape{4, 7});
    for (double& v : x.mutable_data()) v = rng.uniform(-1e4, 1e4);
    const Tensor s = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        ASSERT_TRUE(std::isfinite(s.at(r, c)));
        row += s.at(r, c);
      }
      EXPECT_LT(std::fabs(row - 1.0), 1e-12);
    }
  }
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::vector({3});
  x.set_requires_grad(true);
  sum(mul(x, x)).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  Tensor x = Tensor::vector({0.3, -1.2, 2.0, 0.7});
  x.set_requires_grad(true);
  sum(softmax(x, 0)).backward();
  for (double g : x.grad()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Backward, MatmulSumMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {4, 2});
  std::vector<NamedTensor> params{{"a", a}, {"b", b}};
  const GradReport r = finite_diff_check([&] { return sum(matmul(a, b)); }, params);
  EXPECT_LT(r.max_raw_rel_error, 1e-6);
}

TEST(Backward, ReusedTensorAccumulatesBothPaths) {
  Rng rng(8);
  Tensor x = random_param(rng, {5});
  std::vector<NamedTensor> params{{"x", x}};
  // x feeds the graph twice: through exp and directly.
  expect_gradcheck([&] { return weighted_sum(mul(exp(x), x), 1); }, params);
  x.zero_grad();
  sum(add(x, x)).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::vector({2});
  x.set_requires_grad(true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Backward, NonScalarIsContractError) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  EXPECT_THROW(mul(x, x).backward(), ContractError);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    Rng rng(21);
    Tensor a = random_param(rng, {3, 3}), b = random_param(rng, {3, 3});
    weighted_sum(softmax(matmul(a, b), 1), 4).backward();
    std::vector<double> g(a.grad().begin(), a.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDiff, QuadraticIsExact) {
  Tensor x = Tensor::vector({3});
  x.set_requires_grad(true);
  std::vector<NamedTensor> params{{"x", x}};
  const GradReport r = finite_diff_check([&] { return sum(mul(x, x)); }, params, 1e-3);
  EXPECT_LT(r.max_raw_rel_error, 1e-9);
  EXPECT_EQ(r.checked, 1u);
}

TEST(FiniteDiff, ConstantFunctionHasZeroError) {
  Tensor x = Tensor::vector({1, 2, 3});
  x.set_requires_grad(true);
  std::vector<NamedTensor> params{{"x", x}};
  const GradReport r =
      finite_diff_check([&] { return sum(softmax(x, 0)); }, params);
  EXPECT_EQ(r.max_rel_error, 0.0);
  for (const auto& p : r.per_parameter) EXPECT_GE(p.max_rel_error, 0.0);
}

TEST(FiniteDiff, DetectsWrongBackward) {
  Tensor x = Tensor::vector({0.4, -0.7, 1.3});
  x.set_requires_grad(true);
  std::vector<NamedTensor> params{{"x", x}};
  // y = 2x with a backward that is 0.1% too large.
  auto buggy = [&] {
    Tensor y = scale(x, 2.0);
    auto parent = y.impl()->node->parents[0];
    y.impl()->node->backward = [parent](const detail::TensorImpl& out) {
      auto& g = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.002 * out.grad[i];
    };
    return weighted_sum(y, 2);
  };
  const GradReport r = finite_diff_check(buggy, params);
  EXPECT_FALSE(r.passed(1e-4));
  EXPECT_GT(r.max_rel_error, 5e-4);
}

TEST(FiniteDiff, KinkIsRefinedNotHidden) {
  // relu at exactly 0 straddles the kink at every step size.
  Tensor x = Tensor::vector({0.0, 0.5});
  x.set_requires_grad(true);
  std::vector<NamedTensor> params{{"x", x}};
  const GradReport r = finite_diff_check([&] { return sum(relu(x)); }, params);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_FALSE(r.passed(1e-4));
}

// --- every differentiable op -------------------------------------------------

class OpGradcheck : public ::testing::Test {
 protected:
  Rng rng{2024};
};

TEST_F(OpGradcheck, Matmul) {
  Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {4, 5});
  expect_gradcheck([&] { return weighted_sum(matmul(a, b), 1); }, {{"a", a}, {"b", b}});
}

TEST_F(OpGradcheck, Transpose) {
  Tensor a = random_param(rng, {3, 4});
  expect_gradcheck([&] { return weighted_sum(transpose(a), 2); }, {{"a", a}});
}

TEST_F(OpGradcheck, Reshape) {
  Tensor a = random_param(rng, {3, 4});
  expect_gradcheck([&] { return weighted_sum(reshape(a, {2, 6}), 3); }, {{"a", a}});
}

TEST_F(OpGradcheck, AddSubWithBiasBroadcast) {
  Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {4}), s = random_param(rng, {1});
  expect_gradcheck([&] { return weighted_sum(sub(add(a, b), s), 4); },
                   {{"a", a}, {"b", b}, {"s", s}});
}

TEST_F(OpGradcheck, MulDiv) {
  Tensor a = random_param(rng, {2, 3}), b = random_param(rng, {2, 3}, 0.5, 2.0);
  expect_gradcheck([&] { return weighted_sum(div(mul(a, b), b * b), 5); }, {{"a", a}, {"b", b}});
}

TEST_F(OpGradcheck, MaximumMinimumAwayFromTies) {
  Tensor a = Tensor::vector({0.1, 0.9, -0.4, 0.3});
  Tensor b = Tensor::vector({0.5, 0.2, -0.8, 0.6});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  expect_gradcheck([&] { return weighted_sum(add(maximum(a, b), minimum(a, b) * 3.0), 6); },
                   {{"a", a}, {"b", b}});
}

TEST_F(OpGradcheck, ScaleAddScalarNeg) {
  Tensor a = random_param(rng, {5});
  expect_gradcheck([&] { return weighted_sum(neg(add_scalar(scale(a, 1.7), 0.3)), 7); },
                   {{"a", a}});
}

TEST_F(OpGradcheck, ReluAwayFromZero) {
  Tensor a = Tensor::vector({-0.8, -0.1, 0.2, 1.5});
  a.set_requires_grad(true);
  expect_gradcheck([&] { return weighted_sum(relu(a), 8); }, {{"a", a}});
}

TEST_F(OpGradcheck, SigmoidExpLog) {
  Tensor a = random_param(rng, {6}), p = random_param(rng, {6}, 0.2, 3.0);
  expect_gradcheck([&] { return weighted_sum(add(sigmoid(a), add(exp(a), log(p))), 9); },
                   {{"a", a}, {"p", p}});
}

TEST_F(OpGradcheck, AbsAwayFromZero) {
  Tensor a = Tensor::vector({-0.6, 0.25, 1.1});
  a.set_requires_grad(true);
  expect_gradcheck([&] { return weighted_sum(abs(a), 10); }, {{"a", a}});
}

TEST_F(OpGradcheck, SoftmaxBothAxes) {
  Tensor a = random_param(rng, {3, 4}, -2, 2);
  expect_gradcheck([&] { return weighted_sum(add(softmax(a, 0), softmax(a, 1)), 11); },
                   {{"a", a}});
}

TEST_F(OpGradcheck, LogSoftmax) {
  Tensor a = random_param(rng, {3, 5}, -3, 3);
  expect_gradcheck([&] { return weighted_sum(log_softmax(a, 1), 12); }, {{"a", a}});
}

TEST_F(OpGradcheck, LayerNorm) {
  Tensor x = random_param(rng, {3, 6}, -2, 2), g = random_param(rng, {6}, 0.5, 1.5),
         b = random_param(rng, {6});
  expect_gradcheck([&] { return weighted_sum(layer_norm(x, g, b), 13); },
                   {{"x", x}, {"g", g}, {"b", b}});
}

TEST_F(OpGradcheck, SumMean) {
  Tensor a = random_param(rng, {2, 3});
  expect_gradcheck([&] { return add(sum(mul(a, a)), scale(mean(exp(a)), 2.0)); }, {{"a", a}});
}

TEST_F(OpGradcheck, ConcatSlice) {
  Tensor a = random_param(rng, {2, 3}), b = random_param(rng, {2, 2});
  expect_gradcheck(
      [&] {
        const Tensor parts[] = {a, b};
        const Tensor c = concat(parts, 1);
        const Tensor rows[] = {slice(c, 1, 1, 3), slice(c, 1, 0, 3)};
        return weighted_sum(concat(rows, 0), 14);
      },
      {{"a", a}, {"b", b}});
}

TEST_F(OpGradcheck, GatherRowsAndPick) {
  Tensor a = random_param(rng, {4, 3});
  const std::size_t rows[] = {2, 0, 2, 3};
  const std::size_t cols[] = {1, 0, 2, 2};
  expect_gradcheck([&] { return add(weighted_sum(gather_rows(a, rows), 15), sum(pick(a, cols))); },
                   {{"a", a}});
}

TEST(Tensor, HandleCopiesShareStorageButCloneDoesNot) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data()[0] = 5;
  EXPECT_EQ(b.at(0), 5.0);
  EXPECT_EQ(c.at(0), 1.0);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

}  // namespace
}  // namespace rtdetr
