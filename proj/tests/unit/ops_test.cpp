/* Copyright 2026 The hbnet Authors. All Rights Reserved.

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

#include "hbnet/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "hbnet/error.hpp"
#include "oracles.hpp"

namespace hbnet {
namespace {

using testing::naive_conv;
using testing::random_tensor;
using testing::sign_tensor;

void expect_close(const FloatTensor& got, const std::vector<double>& want, double rel) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double tol = rel * std::max(1.0, std::abs(want[i]));
    ASSERT_NEAR(got.data()[i], want[i], tol) << "index " << i;
  }
}

void expect_exact(const FloatTensor& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_EQ(got.data()[i], want[i]) << "index " << i;
}

TEST(Conv2d, IdentityOneByOne) {
  const FloatTensor x({1, 1, 1}, {4.25f});
  const FloatTensor w({1, 1, 1}, {1.0f});
  const FloatTensor y = conv2d(x, w, {}, ConvSpec{1, 1, 0, 1, 1, false});
  EXPECT_EQ(y, x);
}

TEST(Conv2d, FirstStageGeometry) {
  const ConvSpec spec{11, 4, 0, 3, 96, false};
  EXPECT_EQ(spec.output_shape({227, 227, 3}), (TensorShape{55, 55, 96}));
}

TEST(Conv2d, MatchesNaiveOracle) {
  std::mt19937_64 rng(5);
  for (int pad : {0, 1}) {
    for (int stride : {1, 2}) {
      const FloatTensor x = random_tensor({8, 8, 3}, rng);
      const FloatTensor w = random_tensor({3, 3, 3 * 5}, rng);
      std::vector<float> bias = {0.1f, -0.2f, 0.3f, 0.0f, 1.0f};
      const FloatTensor y = conv2d(x, w, bias, ConvSpec{3, stride, pad, 3, 5, true});
      expect_close(y, naive_conv(x, w, 3, stride, pad, 5, bias), 1e-5);
    }
  }
}

TEST(Conv2d, Linearity) {
  std::mt19937_64 rng(6);
  const FloatTensor a = random_tensor({9, 7, 4}, rng);
  const FloatTensor b = random_tensor({9, 7, 4}, rng);
  FloatTensor sum(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) sum.data()[i] = a.data()[i] + b.data()[i];
  const FloatTensor w = random_tensor({3, 3, 4 * 6}, rng);
  const ConvSpec spec{3, 1, 1, 4, 6, false};
  const FloatTensor ya = conv2d(a, w, {}, spec);
  const FloatTensor yb = conv2d(b, w, {}, spec);
  const FloatTensor ys = conv2d(sum, w, {}, spec);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double want = static_cast<double>(ya.data()[i]) + yb.data()[i];
    ASSERT_NEAR(ys.data()[i], want, 1e-5 * std::max(1.0, std::abs(want)));
  }
}

TEST(Conv2d, ShapeMismatchThrows) {
  const FloatTensor x({4, 4, 3});
  EXPECT_THROW(conv2d(x, FloatTensor({3, 3, 8}), {}, ConvSpec{3, 1, 0, 3, 2, false}), ShapeError);
  EXPECT_THROW(conv2d(x, FloatTensor({3, 3, 6}), {}, ConvSpec{3, 1, 0, 2, 3, false}), ShapeError);
  EXPECT_THROW(conv2d(x, FloatTensor({5, 5, 6}), {}, ConvSpec{5, 1, 0, 3, 2, false}), ShapeError);
}

TEST(Conv2d, CountsMacs) {
  MacCounter macs;
  ExecContext ctx{0, &macs};
  std::mt19937_64 rng(1);
  conv2d(random_tensor({10, 10, 8}, rng), random_tensor({3, 3, 8 * 16}, rng), {},
         ConvSpec{3, 1, 1, 8, 16, false}, ctx);
  EXPECT_EQ(macs.fp32.load(), 9u * 8u * 100u * 16u);
  EXPECT_EQ(macs.binary.load(), 0u);
}

TEST(Depthwise, UnitKernelIsStridedCopy) {
  std::mt19937_64 rng(2);
  const FloatTensor x = random_tensor({7, 7, 3}, rng);
  const FloatTensor y = depthwise_conv2d(x, FloatTensor({1, 1, 3}, 1.0f), {},
                                         DepthwiseSpec{1, 2, 0, 1, false});
  ASSERT_EQ(y.shape(), (TensorShape{4, 4, 3}));
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(y.at(oy, ox, c), x.at(2 * oy, 2 * ox, c));
}

TEST(Depthwise, FirstStageShapeAndMacs) {
  MacCounter macs;
  ExecContext ctx{0, &macs};
  std::mt19937_64 rng(3);
  const FloatTensor x = random_tensor({227, 227, 3}, rng);
  const FloatTensor y = depthwise_conv2d(x, random_tensor({11, 11, 36}, rng), {},
                                         DepthwiseSpec{11, 4, 0, 12, false}, ctx);
  EXPECT_EQ(y.shape(), (TensorShape{55, 55, 36}));
  EXPECT_EQ(macs.fp32.load(), 13176900u);
}

// Grouped-conv oracle: output channel c*d+m only sees input channel c, so a
// dense weight tensor that is zero off the block diagonal reproduces it.
TEST(Depthwise, MatchesBlockDiagonalConv) {
  std::mt19937_64 rng(4);
  for (int d : {1, 2, 3}) {
    const int ci = 4;
    const int co = ci * d;
    const FloatTensor x = random_tensor({9, 8, ci}, rng);
    const FloatTensor wd = random_tensor({3, 3, co}, rng);
    const FloatTensor bias_t = random_tensor({1, 1, co}, rng);
    const std::vector<float> bias(bias_t.data().begin(), bias_t.data().end());
    FloatTensor dense({3, 3, ci * co}, 0.0f);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx)
        for (int c = 0; c < ci; ++c)
          for (int m = 0; m < d; ++m) dense.at(ky, kx, c * co + c * d + m) = wd.at(ky, kx, c * d + m);
    const FloatTensor y = depthwise_conv2d(x, wd, bias, DepthwiseSpec{3, 2, 1, d, true});
    expect_close(y, naive_conv(x, dense, 3, 2, 1, co, bias), 1e-5);
  }
}

TEST(Depthwise, ShapeMismatchThrows) {
  EXPECT_THROW(depthwise_conv2d(FloatTensor({5, 5, 3}), FloatTensor({3, 3, 3}), {},
                                DepthwiseSpec{3, 1, 0, 2, false}),
               ShapeError);
  std::vector<float> bias(2);
  EXPECT_THROW(depthwise_conv2d(FloatTensor({5, 5, 3}), FloatTensor({3, 3, 3}), bias,
                                DepthwiseSpec{3, 1, 0, 1, true}),
               ShapeError);
}

TEST(PackFilters, RoundTrip) {
  std::mt19937_64 rng(8);
  const FloatTensor w = random_tensor({3, 3, 70 * 5}, rng);
  const BitTensor f = pack_filters(w, 3, 70, 5);
  EXPECT_EQ(f.shape(), (TensorShape{5, 9, 70}));
  EXPECT_TRUE(f.padding_clear());
  EXPECT_EQ(unpack_filters(f, 3), sign_tensor(w));
}

TEST(BinaryConv, SelfCorrelationAndNegation) {
  std::mt19937_64 rng(9);
  for (int k : {1, 3, 5}) {
    const int ci = 70;
    const FloatTensor w = random_tensor({k, k, ci}, rng);
    const BitTensor filters = pack_filters(w, k, ci, 1);
    FloatTensor x({k, k, ci});
    FloatTensor neg({k, k, ci});
    for (int y = 0; y < k; ++y)
      for (int xx = 0; xx < k; ++xx)
        for (int c = 0; c < ci; ++c) {
          x.at(y, xx, c) = w.at(y, xx, c);
          neg.at(y, xx, c) = w.at(y, xx, c) >= 0.0f ? -1.0f : 1.0f;
        }
    const ConvSpec spec{k, 1, 0, ci, 1, false};
    EXPECT_EQ(binary_conv2d(binarize(x), filters, spec).data()[0], k * k * ci);
    EXPECT_EQ(binary_conv2d(binarize(neg), filters, spec).data()[0], -k * k * ci);
  }
}

TEST(BinaryConv, PointwiseMatchesFloatOracle) {
  std::mt19937_64 rng(10);
  const FloatTensor x = sign_tensor(random_tensor({10, 10, 64}, rng));
  const FloatTensor w = sign_tensor(random_tensor({1, 1, 64 * 16}, rng));
  MacCounter macs;
  const FloatTensor y = binary_conv2d(binarize(x), pack_filters(w, 1, 64, 16),
                                      ConvSpec{1, 1, 0, 64, 16, false}, ExecContext{0, &macs});
  expect_exact(y, naive_conv(x, w, 1, 1, 0, 16));
  EXPECT_EQ(macs.binary.load(), 64u * 100u * 16u);
  EXPECT_EQ(macs.fp32.load(), 0u);
}

TEST(BinaryConv, PaddedStridedMatchesFloatOracle) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> chans(1, 150);
  for (int trial = 0; trial < 40; ++trial) {
    const int ci = chans(rng);
    const int k = 1 + 2 * (trial % 3);
    const int pad = trial % 2 == 0 ? k / 2 : 0;
    const int stride = 1 + trial % 2;
    const FloatTensor x = sign_tensor(random_tensor({9, 11, ci}, rng));
    const FloatTensor w = sign_tensor(random_tensor({k, k, ci * 7}, rng));
    const FloatTensor y = binary_conv2d(binarize(x), pack_filters(w, k, ci, 7),
                                        ConvSpec{k, stride, pad, ci, 7, false});
    expect_exact(y, naive_conv(x, w, k, stride, pad, 7));
  }
}

TEST(BinaryConv, ShapeMismatchThrows) {
  const BitTensor x({4, 4, 8});
  const BitTensor f({2, 9, 8});
  EXPECT_THROW(binary_conv2d(x, f, ConvSpec{3, 1, 0, 8, 3, false}), ShapeError);
  EXPECT_THROW(binary_conv2d(x, f, ConvSpec{3, 1, 0, 9, 2, false}), ShapeError);
}

TEST(BatchNorm, IdentityAndHandExample) {
  const FloatTensor x({1, 2, 1}, {5.0f, -1.5f});
  EXPECT_EQ(batchnorm(x, BatchNormParams::identity(1)), x);
  BatchNormParams p{{2.0f}, {1.0f}, {3.0f}, {4.0f}, 0.0f};
  EXPECT_FLOAT_EQ(batchnorm(FloatTensor({1, 1, 1}, {5.0f}), p).data()[0], 3.0f);
}

TEST(BatchNorm, MatchesScalarFormula) {
  std::mt19937_64 rng(13);
  const int c = 5;
  std::uniform_real_distribution<float> u(-2.0f, 2.0f), v(0.0f, 3.0f);
  BatchNormParams p;
  p.epsilon = 1e-3f;
  for (int i = 0; i < c; ++i) {
    p.gamma.push_back(u(rng));
    p.beta.push_back(u(rng));
    p.running_mean.push_back(u(rng));
    p.running_var.push_back(v(rng));
  }
  const FloatTensor x = random_tensor({4, 3, c}, rng, -5.0f, 5.0f);
  const FloatTensor y = batchnorm(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const double want = p.gamma[ch] * (x.data()[i] - static_cast<double>(p.running_mean[ch])) /
                            std::sqrt(static_cast<double>(p.running_var[ch]) + p.epsilon) +
                        p.beta[ch];
    ASSERT_NEAR(y.data()[i], want, 1e-5 * std::max(1.0, std::abs(want)));
  }
}

TEST(BatchNorm, ChannelMismatchThrows) {
  EXPECT_THROW(batchnorm(FloatTensor({1, 1, 3}), BatchNormParams::identity(2)), ShapeError);
}

TEST(FoldBn, HandExamples) {
  const ThresholdFold id = fold_bn_binarize(BatchNormParams{{1.0f}, {0.0f}, {0.0f}, {1.0f}, 0.0f});
  EXPECT_EQ(id.threshold[0], 0.0f);
  EXPECT_FALSE(id.flip[0]);

  const BatchNormParams neg{{-1.0f}, {0.0f}, {2.0f}, {1.0f}, 0.0f};
  const ThresholdFold f = fold_bn_binarize(neg);
  EXPECT_EQ(f.threshold[0], 2.0f);
  EXPECT_TRUE(f.flip[0]);
  // BN(1.9) = 0.1 -> +1, BN(2.1) = -0.1 -> -1.
  EXPECT_TRUE(f.positive(0, 1.9f));
  EXPECT_FALSE(f.positive(0, 2.1f));
}

TEST(FoldBn, ZeroGammaIsConstantSign) {
  const ThresholdFold f =
      fold_bn_binarize(BatchNormParams{{0.0f, 0.0f}, {0.5f, -0.5f}, {0.0f, 0.0f}, {1.0f, 1.0f}, 0.0f});
  for (float x : {-1e30f, -1.0f, 0.0f, 1.0f, 1e30f}) {
    EXPECT_TRUE(f.positive(0, x));
    EXPECT_FALSE(f.positive(1, x));
  }
}

// Unfused oracle: binarize(batchnorm(x)) computed by the library's separate
// ops, compared to the folded comparison for random draws.
TEST(FoldBn, AgreesWithUnfusedPath) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f), v(0.0f, 4.0f);
  std::uniform_int_distribution<int> kind(0, 4);
  for (int draw = 0; draw < 10000; ++draw) {
    float gamma = u(rng);
    const int k = kind(rng);
    if (k == 0) gamma = 0.0f;
    if (k == 1) gamma = -std::abs(gamma);
    BatchNormParams p{{gamma}, {u(rng)}, {u(rng)}, {v(rng)}, 1e-3f};
    if (draw % 7 == 0) p.beta[0] = 0.0f;
    const ThresholdFold f = fold_bn_binarize(p);
    FloatTensor x({1, 1, 1}, {u(rng)});
    if (draw % 5 == 0) x.data()[0] = p.running_mean[0];
    const bool unfused = binarize(batchnorm(x, p)).get(0, 0, 0);
    ASSERT_EQ(f.positive(0, x.data()[0]), unfused) << "draw " << draw;
    ASSERT_EQ(threshold_binarize(x, f).get(0, 0, 0), unfused);
  }
}

TEST(MaxPool, ConstantAndGeometry) {
  const FloatTensor y = maxpool(FloatTensor({55, 55, 4}, 2.5f), 3, 2);
  EXPECT_EQ(y.shape(), (TensorShape{27, 27, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 2.5f);
  EXPECT_EQ(window_output(55, 3, 2, 0), 27);
}

TEST(MaxPool, MatchesNaiveOracle) {
  std::mt19937_64 rng(15);
  const FloatTensor x = random_tensor({13, 10, 6}, rng);
  expect_exact(maxpool(x, 3, 2), testing::naive_maxpool(x, 3, 2));
  expect_exact(maxpool(x, 2, 1), testing::naive_maxpool(x, 2, 1));
}

TEST(MaxPool, WindowLargerThanInputThrows) {
  EXPECT_THROW(maxpool(FloatTensor({2, 5, 1}), 3, 1), ShapeError);
}

// sign is monotone, so pooling before binarization equals a boolean OR over
// the binarized window.
TEST(MaxPoolProperty, CommutesWithBinarizeAsOr) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const FloatTensor x = random_tensor({11, 9, 70}, rng);
    const BitTensor pooled = binarize(maxpool(x, 3, 2));
    const BitTensor bits = binarize(x);
    for (int oy = 0; oy < pooled.shape().height; ++oy)
      for (int ox = 0; ox < pooled.shape().width; ++ox)
        for (int c = 0; c < 70; ++c) {
          bool any = false;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) any = any || bits.get(2 * oy + ky, 2 * ox + kx, c);
          ASSERT_EQ(pooled.get(oy, ox, c), any);
        }
  }
}

TEST(ExecContext, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(17);
  const FloatTensor x = random_tensor({20, 20, 8}, rng);
  const FloatTensor w = random_tensor({3, 3, 8 * 4}, rng);
  const ConvSpec spec{3, 1, 1, 8, 4, false};
  EXPECT_EQ(conv2d(x, w, {}, spec, ExecContext{1}), conv2d(x, w, {}, spec, ExecContext{4}));
}

}  // namespace
}  // namespace hbnet
