#include "noiseopt/tensor.hpp"

#include <gtest/gtest.h>

#include "noiseopt/rng.hpp"

namespace noiseopt {
namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  RngStream rng(seed, 0);
  return sample_uniform(rng, s, -1.0, 1.0);
}

// Triple-loop reference product.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.dim(1); ++p) s += a.at(i, p) * b.at(p, j);
      c.at(i, j) = s;
    }
  return c;
}

// Direct cross-correlation with zero padding, written out loop by loop.
Tensor naive_conv(const Tensor& x, const Tensor& k) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), K = k.dim(0), r = k.dim(2) / 2;
  Tensor out({K, H, W});
  for (std::size_t o = 0; o < K; ++o)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < k.dim(2); ++dy)
            for (std::size_t dx = 0; dx < k.dim(3); ++dx) {
              const long iy = static_cast<long>(y + dy) - static_cast<long>(r);
              const long ix = static_cast<long>(xx + dx) - static_cast<long>(r);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              s += x[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] *
                   k[((o * C + c) * k.dim(2) + dy) * k.dim(3) + dx];
            }
        out[(o * H + y) * W + xx] = s;
      }
  return out;
}

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

TEST(TensorTest, ShapeAndSize) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(TensorTest, ElementwiseAndBroadcast) {
  Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor row({1, 2}, std::vector<double>{10, 20});
  a += row;
  EXPECT_EQ(a, Tensor({2, 2}, std::vector<double>{11, 22, 13, 24}));
  EXPECT_THROW(a += Tensor({3, 2}), DimensionError);
  EXPECT_THROW(a += Tensor({4}), DimensionError);
}

TEST(TensorTest, MatmulIdentity) {
  Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor v({2, 1}, std::vector<double>{3, 4});
  EXPECT_EQ(matmul(eye, v), v);
}

TEST(TensorTest, MatmulHandComputed) {
  Tensor a({1, 2}, std::vector<double>{1, 2});
  Tensor b({2, 1}, std::vector<double>{3, 4});
  EXPECT_EQ(matmul(a, b), Tensor({1, 1}, std::vector<double>{11}));
}

TEST(TensorTest, MatmulMatchesTripleLoop) {
  const Tensor a = random_tensor({5, 7}, 1), b = random_tensor({7, 3}, 2);
  expect_near_all(matmul(a, b), naive_matmul(a, b), 1e-12);
}

TEST(TensorTest, MatmulTransposedVariants) {
  const Tensor a = random_tensor({4, 6}, 3), b = random_tensor({5, 6}, 4), c = random_tensor({4, 5}, 5);
  Tensor bt({6, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt.at(j, i) = b.at(i, j);
  expect_near_all(matmul_nt(a, b), naive_matmul(a, bt), 1e-12);
  Tensor at({6, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at.at(j, i) = a.at(i, j);
  expect_near_all(matmul_tn(a, c), naive_matmul(at, c), 1e-12);
}

TEST(TensorTest, MatmulShapeMismatchNamesShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(TensorTest, MatmulAssociativity) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor a = random_tensor({3, 4}, 10 + s), b = random_tensor({4, 5}, 20 + s), v = random_tensor({5, 1}, 30 + s);
    expect_near_all(matmul(matmul(a, b), v), matmul(a, matmul(b, v)), 1e-9);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    expect_near_all(matmul(a, eye), a, 0.0);
  }
}

TEST(ConvTest, ZeroInputGivesZeroOutput) {
  const Tensor out = conv2d(Tensor({2, 5, 5}), random_tensor({3, 2, 3, 3}, 7));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvTest, CenterKernelIsIdentity) {
  const Tensor x = random_tensor({1, 4, 6}, 8);
  Tensor k({1, 1, 3, 3});
  k[4] = 1.0;
  EXPECT_EQ(conv2d(x, k), x);
}

TEST(ConvTest, MatchesNestedLoopOracle) {
  const Tensor x = random_tensor({2, 6, 6}, 9), k = random_tensor({3, 2, 3, 3}, 10);
  expect_near_all(conv2d(x, k), naive_conv(x, k), 1e-12);
}

TEST(ConvTest, Linearity) {
  const Tensor x = random_tensor({2, 5, 4}, 11), y = random_tensor({2, 5, 4}, 12), k = random_tensor({3, 2, 3, 3}, 13);
  const double a = 0.7, b = -1.3;
  Tensor mix = x * a;
  mix += y * b;
  Tensor rhs = conv2d(x, k) * a;
  rhs += conv2d(y, k) * b;
  expect_near_all(conv2d(mix, k), rhs, 1e-10);
}

TEST(ConvTest, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3})), DimensionError);
  EXPECT_THROW(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2})), DimensionError);
}

// <conv(x, k), g> is bilinear, so its gradients follow from the adjoint
// identities <conv(x, k), g> == <x, conv_backward_input(g, k)> == <k, dK>.
TEST(ConvTest, BackwardKernelsAreAdjoint) {
  const Tensor x = random_tensor({2, 5, 6}, 14), k = random_tensor({3, 2, 3, 3}, 15), g = random_tensor({3, 5, 6}, 16);
  const Tensor y = conv2d(x, k);
  double lhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];

  const Tensor gx = conv2d_backward_input(g, k);
  double via_x = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) via_x += x[i] * gx[i];
  EXPECT_NEAR(lhs, via_x, 1e-10);

  Tensor gk(k.shape());
  conv2d_accumulate_kernel_grad(x, g, gk);
  double via_k = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) via_k += k[i] * gk[i];
  EXPECT_NEAR(lhs, via_k, 1e-10);
}

}  // namespace
}  // namespace noiseopt
