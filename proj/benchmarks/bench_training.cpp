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

#include <random>

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include "guidedmix/training.hpp"

namespace {

using namespace guidedmix;

DatasetSplit noise_split(int side) {
  DatasetSplit s;
  s.class_count = 4;
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> cls(0, 3);
  for (int i = 0; i < 8; ++i) {
    Tensor img({3, side, side});
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = u(gen);
    LabelMask m(side, side, 4);
    for (auto& v : m.classes) v = static_cast<std::uint8_t>(cls(gen));
    if (i < 4) {
      s.labeled.push_back({{"l" + std::to_string(i), img}, m});
    } else {
      s.unlabeled.push_back({"u" + std::to_string(i), img});
    }
  }
  return s;
}

// One full step (pairing, mixed pass, targets, both forward/backward passes,
// SGD) on the toy-scale model. arg: crop side.
void BM_TrainStep(benchmark::State& state) {
  spdlog::set_level(spdlog::level::warn);
  const int side = static_cast<int>(state.range(0));
  TrainConfig c;
  c.base_lr = 0.01;
  c.max_iter = 1 << 30;
  c.batch_size = 4;
  c.crop_size = side;
  c.warmup_iters = 0;
  c.decouple_space = DecoupleSpace::kProbabilities;
  c.model.stem_channels = 8;
  c.model.stage_channels = {16, 32};
  c.model.psp_channels = 32;
  c.model.decoder_channels = 16;
  Trainer t(c, noise_split(side), std::nullopt);
  for (auto _ : state) benchmark::DoNotOptimize(t.step().loss.total);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
