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
#include "guidedmix/network.hpp"
#include "guidedmix/pairing.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

FeatureVector fv(std::vector<double> v, std::string id = "") { return {std::move(id), std::move(v)}; }

TEST(Pairing, DistanceTable) {
  const auto a = pair_similar({{1, 2, 3}, {0.5, 4, 4}, {9, 9, 0.1}});
  EXPECT_EQ(a.partner, (std::vector<int>{0, 0, 2}));
  EXPECT_EQ(a.strategy, PairingStrategy::kSimilar);
}

TEST(Pairing, TiesGoToLowestIndex) {
  EXPECT_EQ(pair_similar({{2, 1, 1}, {3, 3, 3}}).partner, (std::vector<int>{1, 0}));
}

TEST(Pairing, EuclideanDistance) {
  EXPECT_DOUBLE_EQ(euclidean_distance(fv({0, 0}), fv({3, 4})), 5.0);
  EXPECT_THROW(euclidean_distance(fv({0}), fv({1, 2})), ValidationError);
}

// Brute-force argmin over random features.
TEST(Pairing, SimilarMatchesBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int nl = rng.uniform_int(1, 6), nu = rng.uniform_int(0, 8), d = rng.uniform_int(1, 5);
    std::vector<FeatureVector> l(nl), u(nu);
    for (auto& f : l) for (int k = 0; k < d; ++k) f.values.push_back(rng.normal());
    for (auto& f : u) for (int k = 0; k < d; ++k) f.values.push_back(rng.normal());
    const auto got = pair_similar(l, u).partner;
    ASSERT_EQ(static_cast<int>(got.size()), nu);
    for (int i = 0; i < nu; ++i) {
      double best = 1e300;
      int arg = -1;
      for (int j = 0; j < nl; ++j) {
        double s = 0;
        for (int k = 0; k < d; ++k) s += (u[i].values[k] - l[j].values[k]) * (u[i].values[k] - l[j].values[k]);
        if (s < best) best = s, arg = j;
      }
      EXPECT_EQ(got[i], arg);
    }
  }
}

TEST(Pairing, EmptyLabeledIsConfigurationError) {
  const std::vector<FeatureVector> none;
  const std::vector<FeatureVector> one = {fv({1})};
  EXPECT_THROW(pair_similar(none, one), ConfigurationError);
  Rng rng(1);
  EXPECT_THROW(pair_random(0, 3, rng), ConfigurationError);
}

TEST(Pairing, RandomInRangeAndSeeded) {
  Rng a(4), b(4);
  const auto pa = pair_random(5, 12, a), pb = pair_random(5, 12, b);
  EXPECT_EQ(pa.partner, pb.partner);
  ASSERT_EQ(pa.partner.size(), 12u);
  for (int p : pa.partner) {
    EXPECT_GE(p, 0);
    EXPECT_LT(p, 5);
  }
}

TEST(Pairing, WithinLabeledExcludesSelf) {
  Rng rng(8);
  for (int n = 2; n < 7; ++n) {
    std::vector<FeatureVector> l(n);
    for (auto& f : l) f.values = {rng.normal(), rng.normal()};
    for (auto s : {PairingStrategy::kSimilar, PairingStrategy::kRandom}) {
      const auto p = pair_within_labeled(l, s, rng);
      for (int i = 0; i < n; ++i) {
        EXPECT_NE(p[i], i);
        EXPECT_GE(p[i], 0);
        EXPECT_LT(p[i], n);
      }
    }
  }
  const std::vector<FeatureVector> single = {fv({1, 2})};
  EXPECT_EQ(pair_within_labeled(single, PairingStrategy::kSimilar, rng), std::vector<int>{0});
}

TEST(Pairing, WithinLabeledSimilarPicksNearest) {
  const std::vector<FeatureVector> l = {fv({0}), fv({10}), fv({1}), fv({11.5})};
  Rng rng(1);
  EXPECT_EQ(pair_within_labeled(l, PairingStrategy::kSimilar, rng), (std::vector<int>{2, 3, 0, 1}));
}

TEST(Pairing, PooledFeaturesLeaveModelUntouched) {
  ModelConfig mc = ModelConfig::preset("tiny", 3);
  mc.stem_channels = 4;
  mc.stage_channels = {8, 8};
  mc.psp_channels = 8;
  mc.decoder_channels = 8;
  SegmentationModel model(mc, 3);
  std::vector<Tensor> before;
  for (const auto& p : model.parameters()) before.push_back(p.var.value());
  std::vector<ImageSample> images;
  for (int i = 0; i < 3; ++i) {
    images.push_back({"img" + std::to_string(i), testing::random_tensor({3, 16, 16}, i, 0, 1)});
  }
  const auto f1 = pooled_features(model, images, Normalization{});
  const auto f2 = pooled_features(model, images, Normalization{});
  ASSERT_EQ(f1.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(f1[i].source_id, images[i].id);
    EXPECT_EQ(f1[i].values, f2[i].values);
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(model.parameters()[i].var.value().storage(), before[i].storage());
  }
}

TEST(Pairing, Names) {
  EXPECT_EQ(parse_pairing("similar"), PairingStrategy::kSimilar);
  EXPECT_EQ(pairing_name(PairingStrategy::kRandom), "random");
  EXPECT_THROW(parse_pairing("nearest"), ConfigurationError);
}

}  // namespace
}  // namespace guidedmix
