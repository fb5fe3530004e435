#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "unetplus/gradcheck.hpp"
#include "unetplus/metrics.hpp"
#include "unetplus/ops.hpp"

using namespace unetplus;

namespace {

Tensor<double> randn(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Central differences written independently of the library helper.
Tensor<double> numeric_grad(const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
                            double h = 1e-5) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double plus = f(x);
    x[i] = keep - h;
    const double minus = f(x);
    x[i] = keep;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Tensor, ZeroDimensionRejected) { EXPECT_THROW(Tensor<float>({2, 0, 3}), ShapeError); }

TEST(Tensor, DataLengthMustMatchShape) { EXPECT_THROW(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), ShapeError); }

TEST(Tensor, ScalarHasRankZero) {
  auto s = Tensor<double>::scalar(3.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.item(), 3.5);
  EXPECT_THROW(Tensor<double>({2}).item(), ShapeError);
}

TEST(Tensor, DimOutOfRange) { EXPECT_THROW(Tensor<float>({2, 3}).dim(2), ShapeError); }

TEST(Ops, AddComponentwise) {
  Tape<double> t;
  auto y = add(t.constant(Tensor<double>({2}, {1, 2})), t.constant(Tensor<double>({2}, {3, 4})));
  EXPECT_EQ(y.value(), Tensor<double>({2}, {4, 6}));
}

TEST(Ops, MulByOneIsExact) {
  Tape<float> t;
  Tensor<float> x({5}, {0.1f, -3.25f, 1e-20f, 7.f, -0.f});
  EXPECT_EQ(mul(t.constant(x), 1.0f).value(), x);
}

TEST(Ops, LogExpInverse) {
  Tape<double> t;
  auto y = log(exp(t.constant(Tensor<double>({2}, {0.5, -0.5}))));
  EXPECT_NEAR(y.value()[0], 0.5, 1e-6);
  EXPECT_NEAR(y.value()[1], -0.5, 1e-6);
}

TEST(Ops, ShapeMismatchThrows) {
  Tape<double> t;
  EXPECT_THROW(add(t.constant(Tensor<double>({2})), t.constant(Tensor<double>({3}))), ShapeError);
}

TEST(Ops, Reductions) {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(sum(x).value().item(), 10.0);
  EXPECT_EQ(mean(x, {0}).value(), Tensor<double>({2}, {2, 3}));
  EXPECT_EQ(max(t.constant(Tensor<double>({2}, {-1, -5}))).value().item(), -1.0);
  EXPECT_THROW(sum(x, {2}), ShapeError);
  EXPECT_THROW(sum(x, {0, 0}), ShapeError);
}

TEST(Ops, SoftmaxChannelsSumToOne) {
  Tape<double> t;
  auto p = softmax_channels(t.constant(randn({2, 3, 2, 2}, 4)));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t q = 0; q < 4; ++q) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += p.value()[(n * 3 + c) * 4 + q];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, StableSigmoidAndSoftplusAtExtremes) {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({2}, {-800.0, 800.0}));
  EXPECT_EQ(sigmoid(x).value()[0], 0.0);
  EXPECT_EQ(sigmoid(x).value()[1], 1.0);
  EXPECT_NEAR(softplus(x).value()[1], 800.0, 1e-9);
  EXPECT_TRUE(softplus(x).value().all_finite());
}

TEST(Autodiff, SumOfSquaresGradient) {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  auto g = t.backward(sum(mul(x, x)));
  EXPECT_EQ(g[x], Tensor<double>({3}, {2, 4, 6}));
}

TEST(Autodiff, SumGradientIsOnes) {
  Tape<double> t;
  auto x = t.leaf(randn({2, 3}, 1), true);
  EXPECT_EQ(t.backward(sum(x))[x], Tensor<double>({2, 3}, 1.0));
}

TEST(Autodiff, FanOutAccumulates) {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({1}, {3.0}), true);
  auto y = add(mul(x, x), mul(x, 2.0));  // x^2 + 2x
  EXPECT_DOUBLE_EQ(t.backward(sum(y))[x][0], 8.0);
}

TEST(Autodiff, UnreachableLeafGetsZeros) {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({2}, 1.0), true);
  auto unused = t.leaf(Tensor<double>({3}, 1.0), true);
  auto g = t.backward(sum(x));
  EXPECT_EQ(g[unused], Tensor<double>({3}, 0.0));
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape<double> t;
  auto c = t.constant(Tensor<double>({2}, 1.0));
  auto x = t.leaf(Tensor<double>({2}, 2.0), true);
  auto g = t.backward(sum(mul(c, x)));
  EXPECT_FALSE(g.contains(c));
  EXPECT_TRUE(g.contains(x));
}

TEST(Autodiff, NonScalarLossRejected) {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({2}, 1.0), true);
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Autodiff, SecondBackwardRejected) {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({2}, 1.0), true);
  auto l = sum(x);
  t.backward(l);
  EXPECT_THROW(t.backward(l), std::logic_error);
}

TEST(Autodiff, StrictModeFlagsDomainErrors) {
  StrictModeGuard guard(true);
  Tape<double> t;
  EXPECT_THROW(log(t.constant(Tensor<double>({1}, {-1.0}))), DomainError);
  EXPECT_THROW(div(t.constant(Tensor<double>({1}, {1.0})), t.constant(Tensor<double>({1}, {0.0}))), DomainError);
}

TEST(Autodiff, CombinedLossMatchesIndependentDifferences) {
  const auto logits = randn({1, 1, 4, 4}, 9);
  Tensor<double> z({1, 1, 4, 4});
  std::mt19937_64 rng(3);
  for (auto& v : z.data()) v = (rng() & 1) ? 1.0 : 0.0;
  Tape<double> t;
  auto x = t.leaf(logits, true);
  const auto analytic = t.backward(combined_loss(x, z))[x];
  const auto numeric = numeric_grad([&](const Tensor<double>& v) { return combined_loss(z, v); }, logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    EXPECT_LT(std::abs(analytic[i] - numeric[i]) / (std::abs(analytic[i]) + 1e-5), 1e-4) << i;
  }
}

TEST(GradCheck, SumOfSquaresIsTight) {
  const auto x = randn({8}, 5);
  auto r = finite_diff_check([](Var<double> v) { return sum(mul(v, v)); }, x);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  auto r = finite_diff_check([](Var<double> v) { return sum(mul(v, 0.0)); }, randn({4}, 6));
  EXPECT_LT(r.max_rel_error, 1e-12);
  EXPECT_EQ(r.analytic, 0.0);
}

TEST(GradCheck, DetectsWrongRule) {
  // d/dx x^2 deliberately reported as x.
  auto bad_square = [](Var<double> v) {
    Tape<double>& t = *v.tape;
    Tensor<double> y = v.value();
    for (auto& e : y.data()) e = e * e;
    auto out = t.record(y, {v}, [v](const Tensor<double>& g, Tape<double>& tape) {
      Tensor<double> gi = g;
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] *= v.value()[i];
      tape.accumulate_grad(v, gi);
    });
    return sum(out);
  };
  EXPECT_GT(finite_diff_check(bad_square, randn({5}, 2)).max_rel_error, 0.1);
}

TEST(GradCheck, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_check([](Var<double> v) { return sum(v); }, randn({2}, 1), 0.0), ConfigError);
}
