#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "crackseg/core/blas.hpp"
#include "crackseg/core/fastmath.hpp"
#include "crackseg/nn/batchnorm.hpp"
#include "crackseg/nn/conv2d.hpp"
#include "crackseg/nn/resample.hpp"
#include "crackseg/nn/transformer.hpp"
#include "gradcheck.hpp"

using namespace crackseg;
using gradcheck::dot;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(s);
  fill_uniform(t, rng, lo, hi);
  return t;
}

template <typename T>
double gemm_error(bool ta, bool tb, int m, int n, int k, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  const int lda = (ta ? m : k) + 3, ldb = (tb ? k : n) + 2, ldc = n + 1;
  std::vector<T> a(static_cast<std::size_t>(ta ? k : m) * lda), b(static_cast<std::size_t>(tb ? n : k) * ldb),
      c(static_cast<std::size_t>(m) * ldc);
  for (auto& v : a) v = static_cast<T>(u(rng));
  for (auto& v : b) v = static_cast<T>(u(rng));
  for (auto& v : c) v = static_cast<T>(u(rng));
  const std::vector<T> c0 = c;
  blas::gemm<T>(ta, tb, m, n, k, T(0.5), a.data(), lda, b.data(), ldb, T(2), c.data(), ldc);
  double worst = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int l = 0; l < k; ++l)
        s += static_cast<double>(ta ? a[l * lda + i] : a[i * lda + l]) * (tb ? b[j * ldb + l] : b[l * ldb + j]);
      const double expect = 0.5 * s + 2.0 * c0[i * ldc + j];
      worst = std::max(worst, std::abs(c[i * ldc + j] - expect));
    }
  return worst;
}

}  // namespace

TEST(Blas, GemmMatchesNaiveProduct) {
  std::mt19937 rng(3);
  for (int m : {1, 18, 33})
    for (int n : {7, 256, 288})
      for (int k : {1, 9, 64})
        for (int ta : {0, 1})
          for (int tb : {0, 1}) {
            EXPECT_LT(gemm_error<double>(ta, tb, m, n, k, rng), 1e-12) << m << " " << n << " " << k << " " << ta << tb;
            EXPECT_LT(gemm_error<float>(ta, tb, m, n, k, rng), 1e-4) << m << " " << n << " " << k << " " << ta << tb;
          }
}

namespace {

// Direct definition of a stride-1 "same" dilated convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias, int dil) {
  const int k = w.h(), pad = dil * (k - 1) / 2;
  Tensor<double> y(x.n(), w.n(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) {
                const int sy = yy - pad + i * dil, sx = xx - pad + j * dil;
                if (sy >= 0 && sy < x.h() && sx >= 0 && sx < x.w()) acc += w(o, c, i, j) * x(n, c, sy, sx);
              }
          y(n, o, yy, xx) = acc;
        }
  return y;
}

}  // namespace

TEST(Conv2d, MatchesDirectDefinitionAcrossDilations) {
  Rng rng(1);
  for (int dil : {1, 2, 5}) {
    nn::Conv2d<double> conv(3, 4, 3, dil, true, rng);
    fill_uniform(conv.bias().value, rng, -1.0, 1.0);
    const auto x = random_tensor({2, 3, 9, 7}, rng);
    const auto y = conv.forward(x);
    const auto ref = naive_conv(x, conv.weight().value, &conv.bias().value, dil);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-12) << "dilation " << dil;
  }
}

TEST(Conv2d, PointwiseKernel) {
  Rng rng(2);
  nn::Conv2d<double> conv(5, 2, 1, 1, false, rng);
  const auto x = random_tensor({1, 5, 4, 6}, rng);
  const auto y = conv.forward(x);
  const auto ref = naive_conv(x, conv.weight().value, nullptr, 1);
  for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  for (int dil : {1, 2}) {
    nn::Conv2d<double> conv(2, 3, 3, dil, true, rng);
    auto x = random_tensor({2, 2, 6, 5}, rng);
    const auto r = random_tensor({2, 3, 6, 5}, rng);
    auto f = [&] { return dot(conv.forward(x), r); };
    conv.zero_grad();
    conv.forward(x);
    const auto dx = conv.backward(r);
    EXPECT_LT(gradcheck::check(x, dx, f), 1e-7);
    EXPECT_LT(gradcheck::check_parameters(conv, f), 1e-7);
  }
}

TEST(Conv2d, RejectsEvenKernel) {
  Rng rng(0);
  EXPECT_THROW(nn::Conv2d<double>(1, 1, 2, 1, false, rng), ConfigError);
}

TEST(BatchNorm, TrainingNormalizesAndTracksRunningStats) {
  Rng rng(4);
  nn::BatchNorm2d<double> bn(2);
  const auto x = random_tensor({3, 2, 4, 4}, rng, 2, 5);
  const auto y = bn.forward(x);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    const int count = 3 * 16;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) {
        mean += y.plane(n, c)[i];
        sq += y.plane(n, c)[i] * y.plane(n, c)[i];
        xm += x.plane(n, c)[i];
      }
    mean /= count;
    xm /= count;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) xsq += (x.plane(n, c)[i] - xm) * (x.plane(n, c)[i] - xm);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / count, 1.0, 1e-3);
    EXPECT_NEAR(bn.running_mean()[c], 0.1 * xm, 1e-12);
    EXPECT_NEAR(bn.running_var()[c], 0.9 + 0.1 * xsq / (count - 1), 1e-12);
  }
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  nn::BatchNorm2d<double> bn(3);
  fill_uniform(bn.gamma().value, rng, 0.5, 1.5);
  fill_uniform(bn.beta().value, rng, -0.5, 0.5);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  const auto r = random_tensor({2, 3, 4, 4}, rng);
  auto f = [&] { return dot(bn.forward(x), r); };
  bn.zero_grad();
  bn.forward(x);
  const auto dx = bn.backward(r);
  EXPECT_LT(gradcheck::check(x, dx, f), 1e-6);
  EXPECT_LT(gradcheck::check_parameters(bn, f), 1e-7);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  nn::BatchNorm2d<double> bn(1);
  bn.running_mean()[0] = 2.0;
  bn.running_var()[0] = 4.0;
  bn.set_training(false);
  Tensor<double> x(1, 1, 1, 2);
  x[0] = 2.0;
  x[1] = 4.0;
  const auto y = bn.forward(x);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(PixelShuffle, ChannelToSubpixelIndexing) {
  const int r = 2;
  Tensor<double> x(1, 2 * r * r, 3, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto y = nn::pixel_shuffle(x, r);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 4}));
  for (int c = 0; c < 2; ++c)
    for (int yy = 0; yy < 3; ++yy)
      for (int xx = 0; xx < 2; ++xx)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            EXPECT_EQ(y(0, c, r * yy + i, r * xx + j), x(0, c * r * r + i * r + j, yy, xx));
  const auto back = nn::pixel_unshuffle(y, r);
  EXPECT_EQ(back.storage(), x.storage());
}

TEST(MaxPool, ForwardAndRoutingOfGradient) {
  nn::MaxPool2d<double> pool;
  Tensor<double> x(1, 1, 2, 4);
  const double v[] = {1, 5, 2, 0, 3, 4, 8, 7};
  for (int i = 0; i < 8; ++i) x[i] = v[i];
  const auto y = pool.forward(x);
  EXPECT_EQ(y[0], 5);
  EXPECT_EQ(y[1], 8);
  Tensor<double> dy(1, 1, 1, 2);
  dy[0] = 1;
  dy[1] = 2;
  const auto dx = pool.backward(dy);
  const double expect[] = {0, 1, 0, 0, 0, 0, 2, 0};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(dx[i], expect[i]);
}

TEST(MaxPool, OddSizeIsAnError) {
  nn::MaxPool2d<double> pool;
  EXPECT_THROW(pool.forward(Tensor<double>(1, 1, 3, 4)), ShapeError);
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  nn::Linear<double> lin(5, 3, rng);
  auto x = random_tensor({7, 5, 1, 1}, rng);
  const auto r = random_tensor({7, 3, 1, 1}, rng);
  auto f = [&] { return dot(lin.forward(x), r); };
  lin.zero_grad();
  lin.forward(x);
  const auto dx = lin.backward(r);
  EXPECT_LT(gradcheck::check(x, dx, f), 1e-8);
  EXPECT_LT(gradcheck::check_parameters(lin, f), 1e-8);
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  nn::LayerNorm<double> ln(6);
  for (auto& p : ln.named_parameters()) fill_uniform(p.param->value, rng, 0.5, 1.5);
  auto x = random_tensor({4, 6, 1, 1}, rng);
  const auto r = random_tensor({4, 6, 1, 1}, rng);
  auto f = [&] { return dot(ln.forward(x), r); };
  ln.zero_grad();
  ln.forward(x);
  const auto dx = ln.backward(r);
  EXPECT_LT(gradcheck::check(x, dx, f), 1e-7);
  EXPECT_LT(gradcheck::check_parameters(ln, f), 1e-7);
}

TEST(Attention, GroupsAreIndependent) {
  Rng rng(8);
  nn::MultiHeadSelfAttention<double> attn(8, 2, rng);
  auto x = random_tensor({12, 8, 1, 1}, rng);
  const auto y = attn.forward(x, 6);
  // Changing a row in the second group leaves the first group's outputs alone.
  x[6 * 8 + 3] += 1.0;
  const auto y2 = attn.forward(x, 6);
  for (int i = 0; i < 6 * 8; ++i) EXPECT_EQ(y[i], y2[i]);
  bool changed = false;
  for (std::size_t i = 6 * 8; i < y.size(); ++i) changed = changed || y[i] != y2[i];
  EXPECT_TRUE(changed);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  nn::MultiHeadSelfAttention<double> attn(8, 2, rng);
  auto x = random_tensor({10, 8, 1, 1}, rng);
  const auto r = random_tensor({10, 8, 1, 1}, rng);
  auto f = [&] { return dot(attn.forward(x, 5), r); };
  attn.zero_grad();
  attn.forward(x, 5);
  const auto dx = attn.backward(r);
  EXPECT_LT(gradcheck::check(x, dx, f), 1e-7);
  EXPECT_LT(gradcheck::check_parameters(attn, f), 1e-7);
}

TEST(Attention, HeadsMustDivideWidth) {
  Rng rng(0);
  EXPECT_THROW(nn::MultiHeadSelfAttention<double>(10, 4, rng), ConfigError);
}

TEST(TransformerLayer, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  nn::TransformerLayer<double> layer(8, 2, 16, rng);
  for (auto& p : layer.named_parameters())
    if (p.name.find("norm") != std::string::npos) fill_uniform(p.param->value, rng, 0.5, 1.5);
  auto x = random_tensor({8, 8, 1, 1}, rng);
  const auto r = random_tensor({8, 8, 1, 1}, rng);
  auto f = [&] { return dot(layer.forward(x, 4), r); };
  layer.zero_grad();
  layer.forward(x, 4);
  const auto dx = layer.backward(r);
  EXPECT_LT(gradcheck::check(x, dx, f), 1e-7);
  EXPECT_LT(gradcheck::check_parameters(layer, f), 1e-7);
}

TEST(FastMath, ExpApproximationIsAccurate) {
  double worst = 0;
  for (float x = -80.f; x <= 0.f; x += 0.01f)
    worst = std::max(worst, std::abs(fastmath::exp_approx(x) / std::exp(static_cast<double>(x)) - 1.0));
  EXPECT_LT(worst, 1e-6);
}

TEST(FastMath, FloatSoftmaxMatchesDouble) {
  Rng rng(11);
  for (int n : {1, 3, 8, 13, 100}) {
    Tensor<double> d(1, n, 1, 1);
    fill_uniform(d, rng, -20.0, 20.0);
    Tensor<float> f = d.cast<float>();
    fastmath::softmax_row(d.data(), n);
    fastmath::softmax_row(f.data(), n);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(f[i], d[i], 1e-6);
      sum += d[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Module, BackwardOutsideTrainingIsRejected) {
  Rng rng(0);
  nn::Conv2d<double> conv(1, 1, 3, 1, false, rng);
  conv.set_training(false);
  conv.forward(Tensor<double>(1, 1, 3, 3));
  EXPECT_THROW(conv.backward(Tensor<double>(1, 1, 3, 3)), Error);
}
