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
#include "guidedmix/mixing.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

TEST(Lambda, FoldedUniformMeanAndRange) {
  LambdaPolicy p;  // alpha 1, clamp 0.5
  Rng rng(2024);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double l = sample_lambda(p, rng);
    ASSERT_GT(l, 0.0);
    ASSERT_LE(l, 0.5);
    sum += l;
  }
  EXPECT_NEAR(sum / n, 0.25, 0.01);
}

TEST(Lambda, TighterClampRejects) {
  for (double clamp : {0.1, 0.2, 0.3, 0.4}) {
    LambdaPolicy p{1.0, clamp};
    Rng rng(3);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double l = sample_lambda(p, rng);
      ASSERT_GT(l, 0.0);
      ASSERT_LT(l, clamp);
      sum += l;
    }
    // Folded uniform conditioned below the clamp stays uniform on (0, clamp).
    EXPECT_NEAR(sum / n, clamp / 2, 0.01 * clamp + 0.002);
  }
}

TEST(Lambda, InvalidPolicy) {
  Rng rng(1);
  EXPECT_THROW(sample_lambda(LambdaPolicy{0.0, 0.5}, rng), ConfigurationError);
  EXPECT_THROW(sample_lambda(LambdaPolicy{1.0, 0.0}, rng), ConfigurationError);
  EXPECT_THROW(sample_lambda(LambdaPolicy{1.0, 0.7}, rng), ConfigurationError);
}

TEST(Mix, Endpoints) {
  const Tensor a = testing::random_tensor({1, 3, 4, 5}, 1);
  const Tensor b = testing::random_tensor({1, 3, 4, 5}, 2);
  EXPECT_EQ(mix_images(a, b, 0.0).storage(), b.storage());
  EXPECT_EQ(mix_images(a, b, 1.0).storage(), a.storage());
}

TEST(Mix, ConstantImages) {
  Tensor ones({1, 3, 2, 2}), zeros({1, 3, 2, 2});
  for (auto& v : ones.storage()) v = 1.0;
  const Tensor m = mix_images(ones, zeros, 0.3);
  for (double v : m.storage()) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(Mix, SymmetryAndBounds) {
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = testing::random_tensor({1, 3, 3, 3}, 100 + trial);
    const Tensor b = testing::random_tensor({1, 3, 3, 3}, 200 + trial);
    Rng rng(trial);
    const double l = rng.uniform();
    const Tensor m1 = mix_images(a, b, l), m2 = mix_images(b, a, 1.0 - l);
    for (std::size_t i = 0; i < m1.size(); ++i) {
      EXPECT_NEAR(m1[i], m2[i], 1e-15);
      EXPECT_GE(m1[i], std::min(a[i], b[i]) - 1e-15);
      EXPECT_LE(m1[i], std::max(a[i], b[i]) + 1e-15);
    }
  }
}

TEST(Mix, ShapeMismatch) {
  EXPECT_THROW(mix_images(Tensor({1, 3, 2, 2}), Tensor({1, 3, 2, 3}), 0.5), ValidationError);
}

TEST(Mix, PairsAreKeyedAndRecorded) {
  const Tensor l = testing::random_tensor({2, 3, 4, 4}, 5);
  const Tensor u = testing::random_tensor({3, 3, 4, 4}, 6);
  const std::vector<int> first = {1, 0, 1};
  const MixedBatch m1 = mix_pairs(l, first, u, LambdaPolicy{}, 9, Stream::kLambda, 17);
  const MixedBatch m2 = mix_pairs(l, first, u, LambdaPolicy{}, 9, Stream::kLambda, 17);
  const MixedBatch m3 = mix_pairs(l, first, u, LambdaPolicy{}, 9, Stream::kLambda, 18);
  ASSERT_EQ(m1.images.shape(), (std::vector<int>{3, 3, 4, 4}));
  EXPECT_EQ(m1.lambdas, m2.lambdas);
  EXPECT_NE(m1.lambdas, m3.lambdas);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(m1.sources[i], std::make_pair(first[i], i));
    const Tensor expect =
        mix_images(l.batch_slice(first[i], first[i] + 1), u.batch_slice(i, i + 1), m1.lambdas[i]);
    EXPECT_EQ(m1.images.batch_slice(i, i + 1).storage(), expect.storage());
  }
}

}  // namespace
}  // namespace guidedmix
