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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace guidedmix {

// Purpose tags for keyed substreams. Drawing from one stream never shifts
// another, so e.g. the labeled sample sequence is independent of whether an
// unlabeled pool exists.
enum class Stream : std::uint64_t {
  kInit = 1,
  kLabeledPick,
  kUnlabeledPick,
  kLabeledAugment,
  kUnlabeledAugment,
  kPairing,
  kLambda,
  kLabeledLambda,
  kSplit,
  kSynthetic,
};

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  // Independent generator for (seed, stream, counters...).
  static Rng keyed(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> counters = {});

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                     // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  int uniform_int(int lo, int hi);       // inclusive bounds
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  double beta(double a, double b);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace guidedmix
