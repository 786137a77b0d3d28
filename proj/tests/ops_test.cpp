/* Copyright 2026 The GuidedMix Authors. All Rights Reserved.

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

#include "guidedmix/error.hpp"
#include "guidedmix/ops.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

using testing::gradient_errors;
using testing::project;
using testing::random_tensor;

constexpr double kGradTol = 1e-3;

// Direct seven-loop convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor out({n, cout, oh, ow});
  for (int bn = 0; bn < n; ++bn)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double s = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                s += x.at(bn, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          out.at(bn, co, y, xx) = s;
        }
  return out;
}

struct ConvCase {
  int cin, cout, k, stride, pad, h, w;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, MatchesDirectLoops) {
  const auto c = GetParam();
  const Tensor x = random_tensor({2, c.cin, c.h, c.w}, 1);
  const Tensor w = random_tensor({c.cout, c.cin, c.k, c.k}, 2);
  const Tensor b = random_tensor({c.cout}, 3);
  const Tensor got = ops::conv2d(Var(x), Var(w), Var(b), c.stride, c.pad).value();
  EXPECT_LE(max_abs_diff(got, naive_conv(x, w, &b, c.stride, c.pad)), 1e-12);
}

TEST_P(ConvTest, GradientsMatchFiniteDifferences) {
  const auto c = GetParam();
  std::vector<Var> in{Var(random_tensor({2, c.cin, c.h, c.w}, 4), true),
                      Var(random_tensor({c.cout, c.cin, c.k, c.k}, 5), true),
                      Var(random_tensor({c.cout}, 6), true)};
  const auto errs = gradient_errors(
      [&](const std::vector<Var>& v) { return project(ops::conv2d(v[0], v[1], v[2], c.stride, c.pad), 7); }, in);
  for (double e : errs) EXPECT_LT(e, kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{3, 4, 3, 1, 1, 6, 5}, ConvCase{2, 3, 3, 2, 1, 7, 8},
                                           ConvCase{4, 2, 1, 1, 0, 5, 5}, ConvCase{2, 2, 1, 2, 0, 6, 6},
                                           ConvCase{1, 2, 3, 1, 0, 5, 4}),
                         [](const ::testing::TestParamInfo<ConvCase>& info) {
                           const auto& c = info.param;
                           return "k" + std::to_string(c.k) + "s" + std::to_string(c.stride) + "p" +
                                  std::to_string(c.pad) + "_" + std::to_string(c.cin) + "to" + std::to_string(c.cout) +
                                  "_" + std::to_string(c.h) + "x" + std::to_string(c.w);
                         });

TEST(Ops, ConvWithoutBias) {
  const Tensor x = random_tensor({1, 2, 4, 4}, 8);
  const Tensor w = random_tensor({3, 2, 3, 3}, 9);
  EXPECT_LE(max_abs_diff(ops::conv2d(Var(x), Var(w), Var(), 1, 1).value(), naive_conv(x, w, nullptr, 1, 1)), 1e-12);
}

TEST(Ops, ElementwiseGradients) {
  std::vector<Var> in{Var(random_tensor({2, 3, 4, 4}, 10), true), Var(random_tensor({2, 3, 4, 4}, 11), true)};
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::add(v[0], v[1]), 1); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::scale(v[0], -2.5), 2); }, {in[0]})) {
    EXPECT_LT(e, kGradTol);
  }
  // Keep inputs away from the kink.
  Tensor r = random_tensor({2, 3, 4, 4}, 12);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += r[i] > 0 ? 0.1 : -0.1;
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::relu(v[0]), 3); }, {Var(r, true)})) {
    EXPECT_LT(e, kGradTol);
  }
}

TEST(Ops, ConcatChannels) {
  std::vector<Var> in{Var(random_tensor({2, 1, 3, 3}, 13), true), Var(random_tensor({2, 3, 3, 3}, 14), true)};
  const Var out = ops::concat_channels(in);
  ASSERT_EQ(out.shape(), (Shape{2, 4, 3, 3}));
  EXPECT_EQ(out.value().at(1, 0, 2, 1), in[0].value().at(1, 0, 2, 1));
  EXPECT_EQ(out.value().at(1, 3, 0, 2), in[1].value().at(1, 2, 0, 2));
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::concat_channels(v), 4); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
}

TEST(Ops, AdaptivePoolBins) {
  // 5 -> 3 bins: [0,2), [1,4), [3,5)
  Tensor x({1, 1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
  const Tensor y = ops::adaptive_avg_pool(Var(x), 1, 3).value();
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
  EXPECT_DOUBLE_EQ(y[2], 4.5);
  for (auto [oh, ow] : {std::pair{1, 1}, {2, 2}, {3, 3}, {6, 6}, {3, 2}}) {
    std::vector<Var> in{Var(random_tensor({2, 2, 5, 7}, 15), true)};
    for (double e : gradient_errors(
             [oh, ow](const std::vector<Var>& v) { return project(ops::adaptive_avg_pool(v[0], oh, ow), 5); }, in)) {
      EXPECT_LT(e, kGradTol) << oh << "x" << ow;
    }
  }
}

TEST(Ops, BilinearHalfPixel) {
  // 2 -> 4 upsampling of [0, 1]: sample points -0.25, 0.25, 0.75, 1.25 (clamped)
  Tensor x({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor y = ops::resize_bilinear(Var(x), 1, 4).value();
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 0.25, 1e-15);
  EXPECT_NEAR(y[2], 0.75, 1e-15);
  EXPECT_NEAR(y[3], 1.0, 1e-15);
  // Constant maps stay constant.
  const Tensor c = ops::resize_bilinear(Var(Tensor({1, 2, 3, 5}, 0.7)), 7, 4).value();
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], 0.7, 1e-14);
  for (auto [oh, ow] : {std::pair{8, 10}, {2, 3}, {5, 5}}) {
    std::vector<Var> in{Var(random_tensor({2, 2, 4, 5}, 16), true)};
    for (double e : gradient_errors(
             [oh, ow](const std::vector<Var>& v) { return project(ops::resize_bilinear(v[0], oh, ow), 6); }, in)) {
      EXPECT_LT(e, kGradTol);
    }
  }
}

TEST(Ops, PixelShuffleIndexMapExhaustive) {
  for (int h = 1; h <= 3; ++h) {
    for (int w = 1; w <= 3; ++w) {
      for (int r = 1; r <= 3; ++r) {
        const int c = 2;
        Tensor x({2, c * r * r, h, w});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
        const Tensor y = ops::pixel_shuffle(x, r);
        ASSERT_EQ(y.shape(), (Shape{2, c, h * r, w * r}));
        for (int n = 0; n < 2; ++n)
          for (int ch = 0; ch < c; ++ch)
            for (int yy = 0; yy < h; ++yy)
              for (int xx = 0; xx < w; ++xx)
                for (int dy = 0; dy < r; ++dy)
                  for (int dx = 0; dx < r; ++dx) {
                    ASSERT_EQ(y.at(n, ch, yy * r + dy, xx * r + dx), x.at(n, ch * r * r + dy * r + dx, yy, xx));
                  }
        EXPECT_EQ(ops::pixel_unshuffle(y, r), x);
        EXPECT_EQ(ops::pixel_shuffle(ops::pixel_unshuffle(y, r), r), y);
      }
    }
  }
}

TEST(Ops, PixelShuffleGradient) {
  std::vector<Var> in{Var(random_tensor({2, 8, 3, 2}, 17), true)};
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::pixel_shuffle(v[0], 2), 7); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
  EXPECT_THROW(ops::pixel_shuffle(Tensor({1, 3, 2, 2}), 2), ValidationError);
}

TEST(Ops, GlobalPoolAndLinear) {
  std::vector<Var> in{Var(random_tensor({3, 4, 2, 5}, 18), true)};
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::global_avg_pool(v[0]), 8); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
  std::vector<Var> lin{Var(random_tensor({3, 4}, 19), true), Var(random_tensor({5, 4}, 20), true),
                       Var(random_tensor({5}, 21), true)};
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::linear(v[0], v[1], v[2]), 9); }, lin)) {
    EXPECT_LT(e, kGradTol);
  }
  EXPECT_THROW(ops::linear(Var(Tensor({2, 3})), Var(Tensor({5, 4})), Var(Tensor({5}))), ValidationError);
}

// out[c, n] = sum_m softmax_m(sum_k q[k,n] k[k,m]) v[c, m], computed with plain loops.
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const int nb = q.dim(0), ck = q.dim(1), cv = v.dim(1), h = q.dim(2), w = q.dim(3), p = h * w;
  Tensor out(v.shape());
  for (int b = 0; b < nb; ++b) {
    for (int n = 0; n < p; ++n) {
      std::vector<double> d(p);
      double mx = -1e300;
      for (int m = 0; m < p; ++m) {
        double s = 0.0;
        for (int c = 0; c < ck; ++c) s += q.at(b, c, n / w, n % w) * k.at(b, c, m / w, m % w);
        d[m] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int m = 0; m < p; ++m) z += std::exp(d[m] - mx);
      for (int c = 0; c < cv; ++c) {
        double s = 0.0;
        for (int m = 0; m < p; ++m) s += std::exp(d[m] - mx) / z * v.at(b, c, m / w, m % w);
        out.at(b, c, n / w, n % w) = s;
      }
    }
  }
  return out;
}

TEST(Ops, AttentionMatchesLoops) {
  for (auto [h, w] : {std::pair{1, 1}, {3, 5}, {8, 8}, {16, 16}}) {
    const Tensor q = random_tensor({2, 4, h, w}, 22), k = random_tensor({2, 4, h, w}, 23);
    const Tensor v = random_tensor({2, 8, h, w}, 24);
    EXPECT_LE(max_abs_diff(ops::attention_aggregate(Var(q), Var(k), Var(v)).value(), naive_attention(q, k, v)), 1e-10);
    const Tensor a = ops::attention_weights(q, k, 1);
    for (int n = 0; n < h * w; ++n) {
      double s = 0.0;
      for (int m = 0; m < h * w; ++m) s += a[static_cast<std::size_t>(n) * h * w + m];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, AttentionGradient) {
  std::vector<Var> in{Var(random_tensor({2, 3, 3, 4}, 25), true), Var(random_tensor({2, 3, 3, 4}, 26), true),
                      Var(random_tensor({2, 5, 3, 4}, 27), true)};
  for (double e : gradient_errors(
           [](const std::vector<Var>& v) { return project(ops::attention_aggregate(v[0], v[1], v[2]), 10); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
}

TEST(Ops, GatherBatchScatterAdds) {
  std::vector<Var> in{Var(random_tensor({3, 2, 2, 2}, 28), true)};
  const std::vector<int> idx{2, 0, 2, 2};
  const Var g = ops::gather_batch(in[0], idx);
  ASSERT_EQ(g.shape()[0], 4);
  EXPECT_EQ(g.value().at(3, 1, 1, 0), in[0].value().at(2, 1, 1, 0));
  for (double e : gradient_errors([&](const std::vector<Var>& v) { return project(ops::gather_batch(v[0], idx), 11); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
  EXPECT_THROW(ops::gather_batch(in[0], {3}), ValidationError);
}

TEST(Ops, WeightedSum) {
  std::vector<Var> in{Var(Tensor({1}, 2.0), true), Var(Tensor({1}, 3.0), true)};
  const Var s = ops::weighted_sum(in, {0.5, 4.0});
  EXPECT_DOUBLE_EQ(s.item(), 13.0);
  backward(s);
  EXPECT_DOUBLE_EQ(in[0].grad()[0], 0.5);
  EXPECT_DOUBLE_EQ(in[1].grad()[0], 4.0);
}

TEST(Ops, SoftmaxChannels) {
  const Tensor x = random_tensor({2, 4, 3, 5}, 29, -30, 30);
  const Tensor y = ops::softmax_channels(x);
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 5; ++w) {
        long double z = 0;
        for (int c = 0; c < 4; ++c) z += std::exp(static_cast<long double>(x.at(n, c, h, w)));
        double total = 0;
        for (int c = 0; c < 4; ++c) {
          EXPECT_NEAR(y.at(n, c, h, w), static_cast<double>(std::exp(static_cast<long double>(x.at(n, c, h, w))) / z), 1e-15);
          total += y.at(n, c, h, w);
        }
        EXPECT_NEAR(total, 1.0, 1e-15);
      }
  Tensor big({1, 2, 1, 1});
  big[0] = 1000.0;
  EXPECT_EQ(ops::softmax_channels(big)[0], 1.0);
  std::vector<Var> in{Var(random_tensor({2, 3, 2, 2}, 30, -2, 2), true)};
  for (double e : gradient_errors([](const std::vector<Var>& v) { return project(ops::softmax_channels(v[0]), 12); }, in)) {
    EXPECT_LT(e, kGradTol);
  }
}

}  // namespace
}  // namespace guidedmix
