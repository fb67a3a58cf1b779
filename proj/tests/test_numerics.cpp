#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fusionsam/error.hpp"
#include "fusionsam/grad_check.hpp"
#include "fusionsam/ops.hpp"
#include "fusionsam/parallel.hpp"
#include "fusionsam/random.hpp"
#include "oracles.hpp"

using namespace fusionsam;

namespace {

std::vector<double> as_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor probe_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(y * oracle::random(y.shape(), rng));
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.data().size(), 24u);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, BackwardPopulatesEveryReachableGrad) {
  Rng rng(1);
  Tensor a = oracle::random({3, 4}, rng);
  Tensor b = oracle::random({4, 2}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor mid = matmul(a, b);
  Tensor loss = sum(square(mid));
  loss.backward();
  ASSERT_TRUE(a.has_grad());
  ASSERT_TRUE(b.has_grad());
  ASSERT_TRUE(mid.has_grad());
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_EQ(mid.grad().size(), mid.numel());
}

TEST(Matmul, IdentityIsBitwise) {
  Rng rng(2);
  Tensor x = oracle::random({2, 5}, rng);
  Tensor y = matmul(Tensor::from({2, 2}, {1, 0, 0, 1}), x);
  EXPECT_EQ(as_vec(y), as_vec(x));
}

TEST(Matmul, HandExpansion) {
  Tensor y = matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {1, 1}));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(as_vec(y), (std::vector<double>{3, 7}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(3);
  Tensor a = oracle::random({7, 5}, rng), b = oracle::random({5, 6}, rng);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < 5; ++p) s += a.at({i, p}) * b.at({p, j});
      EXPECT_NEAR(c.at({i, j}), s, 1e-14);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradCheck) {
  Rng rng(4);
  Tensor a = oracle::random({3, 4}, rng), b = oracle::random({4, 2}, rng);
  GradReport r = grad_check([&] { return probe_sum(matmul(a, b), 9); }, {a, b});
  EXPECT_LE(r.max_rel_err, 1e-6);
  EXPECT_GE(r.max_rel_err, 0.0);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(as_vec(softmax(Tensor::from({3}, {0, 0, 0}), 0)), (std::vector<double>(3, 1.0 / 3.0)));
  Tensor big = softmax(Tensor::from({2}, {1000, 1000}), 0);
  EXPECT_EQ(big.at({0}), 0.5);
  EXPECT_EQ(big.at({1}), 0.5);
  Tensor t = softmax(Tensor::from({2}, {0, std::log(3.0)}), 0);
  EXPECT_NEAR(t.at({0}), 0.25, 1e-15);
  EXPECT_NEAR(t.at({1}), 0.75, 1e-15);
}

TEST(Softmax, SlicesSumToOneProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const double spread = std::pow(10.0, rng.uniform(-2, 3));
    Tensor x = oracle::random({6, 9}, rng, -spread, spread);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      Tensor y = softmax(x, axis);
      const std::size_t outer = axis == 0 ? 9 : 6, inner = axis == 0 ? 6 : 9;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = axis == 0 ? y.at({i, o}) : y.at({o, i});
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Softmax, NanRaisesNumericError) {
  EXPECT_THROW(softmax(Tensor::from({2}, {0, std::nan("")}), 0), NumericError);
}

TEST(LayerNorm, Examples) {
  Tensor one = Tensor::full({2}, 1), zero = Tensor::zeros({2});
  Tensor c = layer_norm(Tensor::from({1, 2}, {5, 5}), one, zero, 1e-5);
  EXPECT_EQ(as_vec(c), (std::vector<double>{0, 0}));
  Tensor y = layer_norm(Tensor::from({1, 2}, {1, 3}), one, zero, 1e-12);
  EXPECT_NEAR(y.at({0, 0}), -1, 1e-9);
  EXPECT_NEAR(y.at({0, 1}), 1, 1e-9);
  EXPECT_THROW(layer_norm(Tensor::from({1, 2}, {1, 3}), one, zero, 0.0), ConfigError);
  EXPECT_THROW(layer_norm(Tensor::from({1, 2}, {1, 3}), one, zero, -1.0), ConfigError);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  Rng rng(6);
  Tensor x = oracle::random({4, 16}, rng, -3, 5);
  Tensor y = layer_norm(x, Tensor::full({16}, 1), Tensor::zeros({16}), 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at({r, c});
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    EXPECT_NEAR(m, 0, 1e-12);
    EXPECT_NEAR(v / 16, 1, 1e-9);
  }
}

TEST(LayerNorm, GradCheck) {
  Rng rng(7);
  Tensor x = oracle::random({2, 8}, rng), g = oracle::random({8}, rng), b = oracle::random({8}, rng);
  GradReport r = grad_check([&] { return probe_sum(layer_norm(x, g, b, 1e-5), 10); }, {x, g, b});
  EXPECT_LE(r.max_rel_err, 1e-5);
}

TEST(Conv2d, OneByOneIdentity) {
  Rng rng(8);
  Tensor x = oracle::random({1, 3, 5, 4}, rng);
  std::vector<Scalar> w(9, 0.0);
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1;
  Tensor y = conv2d(x, Tensor::from({3, 3, 1, 1}, w), Tensor::zeros({3}), 1, 0);
  EXPECT_EQ(as_vec(y), as_vec(x));
}

TEST(Conv2d, AllOnesWindowSum) {
  Tensor y = conv2d(Tensor::full({1, 1, 5, 5}, 1), Tensor::full({1, 1, 3, 3}, 1), Tensor::zeros({1}), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) EXPECT_EQ(y.at({0, 0, r, c}), 9);
  EXPECT_EQ(y.at({0, 0, 0, 0}), 4);
  EXPECT_EQ(y.at({0, 0, 0, 2}), 6);
}

TEST(Conv2d, MatchesDirectSumOracle) {
  Rng rng(9);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 2u}) {
      const std::size_t C = 3, H = 7, W = 6, O = 4, k = 3;
      Tensor x = oracle::random({1, C, H, W}, rng), w = oracle::random({O, C, k, k}, rng);
      Tensor y = conv2d(x, w, Tensor::zeros({O}), stride, pad);
      std::size_t oh = 0, ow = 0;
      auto ref = oracle::conv(as_vec(x), C, H, W, as_vec(w), O, k, stride, pad, oh, ow);
      ASSERT_EQ(y.shape(), (Shape{1, O, oh, ow}));
      EXPECT_EQ(oh, (H + 2 * pad - k) / stride + 1);
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-13);
    }
  }
}

TEST(Conv2d, ChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 1),
               DimensionError);
}

TEST(Conv2d, GradCheck) {
  Rng rng(10);
  Tensor x = oracle::random({1, 2, 4, 4}, rng), w = oracle::random({3, 2, 3, 3}, rng), b = oracle::random({3}, rng);
  GradReport r = grad_check([&] { return probe_sum(conv2d(x, w, b, 1, 1), 11); }, {x, w, b});
  EXPECT_LE(r.max_rel_err, 1e-5);
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  // <conv(x), y> == <x, conv_t(y)> with the same kernel and zero bias.
  Rng rng(11);
  Tensor x = oracle::random({1, 2, 8, 8}, rng), w = oracle::random({3, 2, 4, 4}, rng);
  Tensor cx = conv2d(x, w, Tensor::zeros({3}), 2, 1);
  Tensor y = oracle::random(cx.shape(), rng);
  Tensor ty = conv_transpose2d(y, w, Tensor::zeros({2}), 2, 1);
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-11);
}

TEST(Ops, Determinism) {
  Rng a(12), b(12);
  Tensor x1 = oracle::random({1, 4, 8, 8}, a), w1 = oracle::random({5, 4, 3, 3}, a);
  Tensor x2 = oracle::random({1, 4, 8, 8}, b), w2 = oracle::random({5, 4, 3, 3}, b);
  EXPECT_EQ(as_vec(conv2d(x1, w1, Tensor::zeros({5}), 1, 1)), as_vec(conv2d(x2, w2, Tensor::zeros({5}), 1, 1)));
}

TEST(Ops, ThreadCountDoesNotChangeResults) {
  Rng rng(13);
  Tensor x = oracle::random({1, 4, 16, 16}, rng), w = oracle::random({6, 4, 3, 3}, rng);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  auto run = [&] {
    x.clear_grad();
    w.clear_grad();
    Tensor y = conv2d(x, w, Tensor::zeros({6}), 1, 1);
    sum(square(y)).backward();
    std::vector<double> out = as_vec(y);
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  set_num_threads(1);
  const auto serial = run();
  set_num_threads(4);
  const auto threaded = run();
  set_num_threads(1);
  EXPECT_EQ(serial, threaded);
}

TEST(GradCheck, SumOfSquares) {
  Tensor x = Tensor::from({2}, {1, 2});
  GradReport r = grad_check([](const Tensor& t) { return sum_squares(t); }, x);
  EXPECT_LE(r.max_rel_err, 1e-8);
  x.set_requires_grad(true);
  sum_squares(x).backward();
  EXPECT_EQ(x.grad()[0], 2);
  EXPECT_EQ(x.grad()[1], 4);
}

TEST(GradCheck, ConstantFunctionHasZeroGrad) {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  GradReport r = grad_check([](const Tensor& t) { return sum(t) * Scalar(0) + Tensor::scalar(5); }, x);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.max_rel_err, 0.0);
}

TEST(GradCheck, NonScalarOutputIsContractError) {
  Tensor x = Tensor::from({2}, {1, 2});
  EXPECT_THROW(grad_check([](const Tensor& t) { return square(t); }, x), ContractError);
}

TEST(GradCheck, DetectsWrongGradient) {
  // stop_gradient has zero backward but nonzero derivative.
  Tensor x = Tensor::from({2}, {1, 2});
  GradReport r = grad_check([](const Tensor& t) { return sum_squares(stop_gradient(t)) + sum(t); }, x);
  EXPECT_GT(r.max_rel_err, 0.5);
}

TEST(StraightThrough, ForwardAndIdentityJacobian) {
  Rng rng(14);
  Tensor z = oracle::random({2, 3}, rng), zq = oracle::random({2, 3}, rng);
  z.set_requires_grad(true);
  zq.set_requires_grad(true);
  Tensor out = straight_through(z, zq);
  EXPECT_EQ(as_vec(out), as_vec(zq));
  sum(out).backward();
  for (double g : z.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_THROW(straight_through(z, Tensor::zeros({3, 2})), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLnC) {
  Tensor logits = Tensor::zeros({4, 3, 3});
  std::vector<int> labels(9);
  for (int i = 0; i < 9; ++i) labels[i] = i % 4;
  EXPECT_NEAR(cross_entropy(logits, labels).item(), std::log(4.0), 1e-15);
}
