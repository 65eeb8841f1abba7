#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace deepel;

namespace {

// Central differences computed here, independent of GradCheck.
std::vector<double> NumericGrad(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double eps = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = x[i];
    x[i] = s + eps;
    const double fp = f(x);
    x[i] = s - eps;
    const double fm = f(x);
    x[i] = s;
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST(Autodiff, SoftmaxOfEqualScoresIsUniform) {
  Tape t;
  std::vector<double> x{2.0, 2.0};
  Var p = Softmax(t.Constant(x));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Autodiff, SoftmaxIsShiftInvariantAndStable) {
  Tape t;
  std::vector<double> x{1000.0, 1001.0, 999.0};
  Var p = Softmax(t.Constant(x));
  const double z = std::exp(-1.0) + 1.0 + std::exp(-2.0);
  EXPECT_NEAR(p[1], 1.0 / z, 1e-12);
  EXPECT_NEAR(p[0], std::exp(-1.0) / z, 1e-12);
}

TEST(Autodiff, ReluValuesAndGradient) {
  Tape t;
  std::vector<double> x{-1.0, 2.0, 0.5};
  Var v = t.Parameter(x);
  Var y = Sum(Relu(v));
  EXPECT_DOUBLE_EQ(y.scalar(), 2.5);
  t.Backward(y);
  auto g = t.GradOf(x.data());
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
}

TEST(Autodiff, MaxRoutesGradientToArgmax) {
  Tape t;
  std::vector<double> x{0.3, 1.7, -4.0};
  Var m = MaxOver(t.Parameter(x));
  EXPECT_DOUBLE_EQ(m.scalar(), 1.7);
  t.Backward(m);
  auto g = t.GradOf(x.data());
  EXPECT_EQ(std::vector<double>(g.begin(), g.end()), (std::vector<double>{0, 1, 0}));
}

TEST(Autodiff, SquareMatchesFiniteDifference) {
  std::vector<double> x{0.7, -1.3, 2.0};
  Tape t;
  Var v = t.Parameter(x);
  Var y = Sum(Mul(v, v));
  t.Backward(y);
  auto g = t.GradOf(x.data());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g[i], 2 * x[i], 1e-12);
  auto num = NumericGrad([](const std::vector<double>& z) {
    double s = 0;
    for (double v : z) s += v * v;
    return s;
  }, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g[i], num[i], 1e-6);
}

TEST(Autodiff, MaskedSoftmaxHasZeroProbabilityAndGradient) {
  std::vector<double> x{0.5, 3.0, -1.0, 0.2};
  std::vector<double> w{1.0, 2.0, 3.0, 4.0};
  const std::vector<bool> mask{false, true, false, false};
  Tape t;
  Var p = Softmax(MaskedFill(t.Parameter(x), mask, kNegInf));
  EXPECT_EQ(p[1], 0.0);
  double s = 0;
  for (std::size_t i = 0; i < 4; ++i) s += p[i];
  EXPECT_NEAR(s, 1.0, 1e-12);
  Var y = Dot(p, t.Constant(w));
  t.Backward(y);
  auto g = t.GradOf(x.data());
  EXPECT_EQ(g[1], 0.0);
  auto num = NumericGrad([&](const std::vector<double>& z) {
    double e[4], tot = 0, out = 0;
    for (int i = 0; i < 4; ++i) {
      e[i] = i == 1 ? 0.0 : std::exp(z[i]);
      tot += e[i];
    }
    for (int i = 0; i < 4; ++i) out += w[i] * e[i] / tot;
    return out;
  }, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], num[i], 1e-6) << i;
}

TEST(Autodiff, GradientIsLinearInOutputs) {
  std::mt19937_64 rng(9);
  std::vector<double> a(6), b(6);
  for (auto& v : a) v = StandardNormal(rng);
  for (auto& v : b) v = StandardNormal(rng);
  auto grad_of = [&](double ca, double cb) {
    Tape t;
    Var x = t.Parameter(a);
    Var f1 = Dot(x, t.Constant(b));
    Var f2 = LogSumExp(x);
    Var y = Add(Scale(f1, ca), Scale(f2, cb));
    t.Backward(y);
    auto g = t.GradOf(a.data());
    return std::vector<double>(g.begin(), g.end());
  };
  auto g1 = grad_of(1, 0), g2 = grad_of(0, 1), g12 = grad_of(2, -3);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g12[i], 2 * g1[i] - 3 * g2[i], 1e-12);
}

TEST(Autodiff, MatMulMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  std::vector<double> a(6), b(12);
  for (auto& v : a) v = StandardNormal(rng);
  for (auto& v : b) v = StandardNormal(rng);
  auto f = [&](const std::vector<double>& av) {
    Tape t;
    Var m = MatMul(t.Constant(2, 3, av), t.Constant(3, 4, b));
    return Sum(Mul(m, m)).scalar();
  };
  Tape t;
  Var m = MatMul(t.Parameter(a, 2, 3), t.Constant(3, 4, b));
  Var y = Sum(Mul(m, m));
  t.Backward(y);
  auto g = t.GradOf(a.data());
  auto num = NumericGrad(f, a);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(g[i], num[i], 1e-5);
}

TEST(Autodiff, LogSoftmaxOfMaskedEntryIsMinusInfinityFree) {
  Tape t;
  std::vector<double> x{1.0, 2.0};
  Var l = LogSoftmax(t.Constant(x));
  EXPECT_NEAR(l[0], 1.0 - std::log(std::exp(1.0) + std::exp(2.0)), 1e-12);
}

TEST(Autodiff, DecisionsChangeWhenArgmaxChanges) {
  auto sig = [](double a) {
    Tape t;
    std::vector<double> x{a, 1.0};
    MaxOver(t.Constant(x));
    return t.decisions();
  };
  EXPECT_EQ(sig(0.0), sig(0.5));
  EXPECT_NE(sig(0.0), sig(2.0));
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_NEAR(RelativeError(1.0, 1.1), 0.1 / 1.1, 1e-12);
  EXPECT_DOUBLE_EQ(RelativeError(0.0, 0.0), 0.0);
  EXPECT_NEAR(RelativeError(0.0, 1e-9), 0.1, 1e-12);
}

TEST(GradCheck, PassesOnSmoothFunction) {
  std::vector<double> x{0.3, -0.2, 0.9};
  std::vector<std::span<double>> blocks{x};
  auto rep = GradCheck([&](Tape& t) { return LogSumExp(Mul(t.Parameter(x), t.Parameter(x))); },
                       blocks);
  EXPECT_EQ(rep.checked, 3u);
  EXPECT_LT(rep.max_rel_error, 1e-6);
}
