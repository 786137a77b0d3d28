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

#include "guidedmix/config.hpp"
#include "guidedmix/error.hpp"
#include "guidedmix/rng.hpp"
#include "guidedmix/training.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

std::string error_text(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyGivesDefaults) {
  const TrainConfig c = parse_config_text("");
  EXPECT_EQ(c, TrainConfig{});
  EXPECT_DOUBLE_EQ(c.base_lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.weight_decay, 1e-4);
  EXPECT_DOUBLE_EQ(c.power, 0.9);
  EXPECT_EQ(c.batch_size, 12);
  EXPECT_EQ(c.crop_size, 321);
  EXPECT_EQ(c.decouple, DecoupleMode::kSoft);
  EXPECT_EQ(c.pairing, PairingStrategy::kSimilar);
  EXPECT_EQ(c.resolved_warmup(), 4000);
}

TEST(Config, SectionsAndDottedKeys) {
  const TrainConfig c = parse_config_text(R"(
# comment
base_lr = 0.02   # trailing
lambda.alpha = 0.5
[lambda]
clamp_max = 0.3
[model]
stage_channels = [8, 16, 32]
[data]
root = "some \"dir\""
labeled_ratio = 0.125
[augment]
enable_rotation = false
)");
  EXPECT_DOUBLE_EQ(c.base_lr, 0.02);
  EXPECT_DOUBLE_EQ(c.lambda.alpha, 0.5);
  EXPECT_DOUBLE_EQ(c.lambda.clamp_max, 0.3);
  EXPECT_EQ(c.model.stage_channels, (std::vector<int>{8, 16, 32}));
  EXPECT_EQ(c.data.root, "some \"dir\"");
  EXPECT_DOUBLE_EQ(c.data.labeled_ratio, 0.125);
  EXPECT_FALSE(c.augment.enable_rotation);
}

TEST(Config, IntegerAcceptedForFloat) {
  EXPECT_DOUBLE_EQ(parse_config_text("ramp.w_max = 2").ramp.w_max, 2.0);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_text("batch_size = 0").find("batch_size"), std::string::npos);
  EXPECT_NE(error_text("lambda.clamp_max = 0.7").find("clamp_max"), std::string::npos);
  EXPECT_NE(error_text("base_lr = -1").find("base_lr"), std::string::npos);
  const std::string unknown = error_text("\n\nbogus_key = 1");
  EXPECT_NE(unknown.find("bogus_key"), std::string::npos);
  EXPECT_NE(unknown.find("line 3"), std::string::npos);
  EXPECT_THROW(parse_config_text("batch_size = 0"), ConfigurationError);
  EXPECT_THROW(parse_config_text("batch_size = \"four\""), ConfigurationError);
  EXPECT_THROW(parse_config_text("decouple = \"medium\""), ConfigurationError);
}

TEST(Config, SyntaxErrorsCarryLine) {
  for (const auto& [text, line] : std::vector<std::pair<std::string, std::string>>{
           {"a = 1\nb = \n", "line 2"},
           {"x = \"open\n", "line 1"},
           {"\n\n[model\n", "line 3"},
           {"seed = 1\nseed = 2\n", "line 2"},
           {"model.stage_channels = [1, [2]]", "line 1"}}) {
    try {
      parse_document(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
    }
  }
}

// Random configs survive echo -> parse unchanged.
TEST(Config, EchoRoundTrip) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    TrainConfig c;
    c.base_lr = rng.uniform(1e-5, 1.0);
    c.momentum = rng.uniform(0, 0.99);
    c.weight_decay = rng.uniform(0, 1e-2);
    c.max_iter = rng.uniform_int(1, 100000);
    c.batch_size = rng.uniform_int(1, 32);
    c.crop_size = rng.uniform_int(16, 600);
    c.lambda.alpha = rng.uniform(0.1, 4);
    c.lambda.clamp_max = rng.uniform(0.05, 0.5);
    c.pairing = rng.bernoulli(0.5) ? PairingStrategy::kSimilar : PairingStrategy::kRandom;
    c.decouple = rng.bernoulli(0.5) ? DecoupleMode::kHard : DecoupleMode::kSoft;
    c.decouple_space = rng.bernoulli(0.5) ? DecoupleSpace::kLogits : DecoupleSpace::kProbabilities;
    c.use_mitrans = rng.bernoulli(0.5);
    c.use_l_dec = rng.bernoulli(0.8);
    c.use_l_cla = rng.bernoulli(0.8);
    c.mixed_grad = rng.bernoulli(0.5);
    c.warmup_iters = rng.bernoulli(0.5) ? -1 : rng.uniform_int(0, 50);
    c.ramp.w_max = rng.uniform(0, 3);
    c.seed = rng.next_u64();
    c.data.root = "data dir/" + std::to_string(trial);
    c.data.labeled_ratio = rng.uniform();
    c.model.stage_channels = {rng.uniform_int(1, 64), rng.uniform_int(1, 64)};
    c.augment.fill = {rng.uniform(), rng.uniform(), rng.uniform()};
    c.normalize.stddev = {rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)};
    c.output.eval_interval = rng.bernoulli(0.5) ? -1 : rng.uniform_int(1, 1000);
    const std::string text = echo_config(c);
    const TrainConfig back = parse_config_text(text);
    EXPECT_EQ(back, c) << text;
    EXPECT_EQ(echo_config(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
  }
}

TEST(Config, HashTracksContent) {
  TrainConfig a, b;
  b.seed = 1;
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, FileHelpers) {
  const auto dir = testing::temp_dir("config_files");
  write_text_file(dir / "c.toml", "seed = 9\n");
  EXPECT_EQ(parse_config(dir / "c.toml").seed, 9u);
  EXPECT_THROW(parse_config(dir / "missing.toml"), IoError);
}

}  // namespace
}  // namespace guidedmix
