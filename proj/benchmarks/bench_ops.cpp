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

#include "guidedmix/autograd.hpp"
#include "guidedmix/losses.hpp"
#include "guidedmix/ops.hpp"
#include "guidedmix/pmg.hpp"

namespace {

using guidedmix::Tensor;
using guidedmix::Var;

Tensor noise(const guidedmix::Shape& s, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(gen);
  return t;
}

// args: channels, side
void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var x(noise({4, c, s, s}, 1)), w(noise({c, c, 3, 3}, 2)), b(noise({c}, 3));
  guidedmix::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(guidedmix::ops::conv2d(x, w, b, 1, 1).value().data());
  state.SetItemsProcessed(state.iterations() * 4LL * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 32})->Args({32, 16})->Args({64, 8});

void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  Var x(noise({4, c, s, s}, 1), true), w(noise({c, c, 3, 3}, 2), true), b(noise({c}, 3), true);
  const Tensor target = noise({4, c, s, s}, 9);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    guidedmix::backward(guidedmix::mse_map_loss(target, guidedmix::ops::conv2d(x, w, b, 1, 1)));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 32})->Args({32, 16});

// args: side (P = side^2 positions)
void BM_Attention(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const Var q(noise({2, 16, s, s}, 4)), k(noise({2, 16, s, s}, 5)), v(noise({2, 32, s, s}, 6));
  guidedmix::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(guidedmix::ops::attention_aggregate(q, k, v).value().data());
}
BENCHMARK(BM_Attention)->Arg(4)->Arg(8)->Arg(16);

void BM_SoftDecouple(benchmark::State& state) {
  const Tensor mixed = noise({8, 21, 64, 64}, 7), labeled = noise({8, 21, 64, 64}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(guidedmix::soft_decouple(mixed, labeled, 0.3).data());
  state.SetBytesProcessed(state.iterations() * 3LL * mixed.size() * sizeof(double));
}
BENCHMARK(BM_SoftDecouple);

}  // namespace
