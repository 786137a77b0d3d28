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

#include <algorithm>
#include <cmath>

#include "guidedmix/error.hpp"
#include "guidedmix/losses.hpp"
#include "guidedmix/network.hpp"
#include "guidedmix/ops.hpp"
#include "guidedmix/rng.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

ModelConfig tiny(int classes, int mitrans = 1) {
  ModelConfig c = ModelConfig::preset("tiny", classes);
  c.stem_channels = 8;
  c.stage_channels = {8, 8};
  c.psp_channels = 8;
  c.decoder_channels = 8;
  c.mitrans_count = mitrans;
  return c;
}

TEST(Network, OutputShapes) {
  for (int classes : {2, 4, 21}) {
    SegmentationModel m(tiny(classes), 1);
    const auto out = m.forward(testing::random_tensor({2, 3, 32, 48}, 3), true);
    EXPECT_EQ(out.logits.shape(), (Shape{2, classes, 32, 48}));
    EXPECT_EQ(out.pooled.shape(), (Shape{2, m.pooled_dim()}));
    EXPECT_EQ(out.class_logits.shape(), (Shape{2, classes - 1}));
  }
}

TEST(Network, RejectsBadInput) {
  SegmentationModel m(tiny(3), 1);
  EXPECT_THROW(m.forward(Tensor({1, 3, 20, 32}), true), ValidationError);
  EXPECT_THROW(m.forward(Tensor({1, 1, 16, 16}), true), ValidationError);
}

TEST(Network, ForwardIsPure) {
  SegmentationModel m(tiny(3), 5);
  std::vector<Tensor> before;
  for (const auto& p : m.parameters()) before.push_back(p.var.value());
  const Tensor x = testing::random_tensor({1, 3, 16, 16}, 2);
  const Tensor a = m.forward(x, true).logits.value();
  const Tensor b = m.forward(x, true).logits.value();
  EXPECT_EQ(a.storage(), b.storage());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(m.parameters()[i].var.value().storage(), before[i].storage());
  }
}

TEST(Network, SameSeedSameWeights) {
  SegmentationModel a(tiny(3), 9), b(tiny(3), 9), c(tiny(3), 10);
  EXPECT_EQ(a.named_arrays(), b.named_arrays());
  EXPECT_NE(a.named_arrays(), c.named_arrays());
}

// With a zero value projection every non-local block adds exactly zero.
TEST(Network, MitransOffEqualsZeroValueProjection) {
  for (int blocks : {1, 2}) {
    SegmentationModel m(tiny(3, blocks), 4);
    for (auto& p : m.parameters()) {
      if (p.name.find(".value.") != std::string::npos) {
        for (auto& v : p.var.mutable_value().storage()) v = 0.0;
      }
    }
    const Tensor x = testing::random_tensor({2, 3, 32, 32}, 6);
    EXPECT_EQ(m.forward(x, true).logits.value().storage(), m.forward(x, false).logits.value().storage());
  }
}

TEST(Network, MitransChangesOutput) {
  SegmentationModel m(tiny(3), 4);
  const Tensor x = testing::random_tensor({1, 3, 32, 32}, 6);
  EXPECT_NE(m.forward(x, true).logits.value().storage(), m.forward(x, false).logits.value().storage());
}

TEST(Network, ZeroHeadGivesZeroLogits) {
  SegmentationModel m(tiny(4), 2);
  for (auto& p : m.parameters()) {
    if (p.name.rfind("decoder.head.", 0) == 0 || p.group == "classifier") {
      for (auto& v : p.var.mutable_value().storage()) v = 0.0;
    }
  }
  const auto out = m.forward(testing::random_tensor({1, 3, 16, 16}, 1), true);
  for (double v : out.logits.value().storage()) EXPECT_EQ(v, 0.0);
  for (double v : out.class_logits.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Network, ConvLayerNames) {
  SegmentationModel m(tiny(3, 2), 1);
  const auto on = m.conv_layer_names(true), off = m.conv_layer_names(false);
  EXPECT_EQ(on.size(), off.size() + 6);
  EXPECT_EQ(std::count_if(on.begin(), on.end(), [](const std::string& s) { return s.rfind("mitrans.", 0) == 0; }), 6);
}

TEST(Network, CopyOwnsParameters) {
  SegmentationModel a(tiny(3), 1);
  SegmentationModel b = a;
  b.parameters()[0].var.mutable_value()[0] += 1.0;
  EXPECT_NE(a.parameters()[0].var.value()[0], b.parameters()[0].var.value()[0]);
}

TEST(Network, NamedArrayRoundTrip) {
  SegmentationModel a(tiny(3), 1), b(tiny(3), 2);
  EXPECT_TRUE(b.load_named_arrays(a.named_arrays()).empty());
  EXPECT_EQ(a.named_arrays(), b.named_arrays());
  auto arrays = a.named_arrays();
  arrays[0].second = Tensor({1});
  arrays.push_back({"bogus", Tensor({2})});
  EXPECT_EQ(b.load_named_arrays(arrays).size(), 2u);
}

TEST(Network, ProbeSeesEveryConv) {
  SegmentationModel m(tiny(3), 1);
  ActivationProbe probe;
  m.forward(testing::random_tensor({1, 3, 16, 16}, 1), true, &probe);
  const auto names = m.conv_layer_names(true);
  ASSERT_EQ(probe.means.size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(probe.means[i].first, names[i]);
}

// Finite differences on a sample of entries of every parameter tensor.
TEST(Network, ParameterGradients) {
  SegmentationModel m(tiny(2), 3);
  const Tensor x = testing::random_tensor({2, 3, 16, 16}, 8);
  LabelMask m0(16, 16, 2), m1(16, 16, 2);
  Rng rng(2);
  for (auto& v : m0.classes) v = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
  for (auto& v : m1.classes) v = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
  const std::vector<const LabelMask*> masks = {&m0, &m1};
  const Tensor target = testing::random_tensor({2, 2, 16, 16}, 9);
  auto loss = [&] {
    const auto out = m.forward(x, true);
    return ops::weighted_sum({cross_entropy_loss(out.logits, masks), mse_map_loss(target, out.logits),
                              classifier_loss(out.class_logits, {{0}, {}})},
                             {1.0, 0.5, 1.0});
  };
  m.zero_grad();
  backward(loss());
  for (auto& p : m.parameters()) {
    const Tensor analytic = p.var.grad();
    Tensor& w = p.var.mutable_value();
    Rng pick(std::hash<std::string>{}(p.name));
    const std::size_t samples = std::min<std::size_t>(w.size(), 6);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i = samples == w.size() ? s : static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(w.size()) - 1));
      const double keep = w[i], h = 1e-5;
      NoGradGuard guard;
      w[i] = keep + h;
      const double up = loss().item();
      w[i] = keep - h;
      const double down = loss().item();
      w[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      EXPECT_LT(std::abs(numeric - analytic[i]) / scale, 1e-4) << p.name << "[" << i << "]";
    }
  }
}

}  // namespace
}  // namespace guidedmix
