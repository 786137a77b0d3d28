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
#include <string>
#include <utility>
#include <vector>

#include "guidedmix/rng.hpp"
#include "guidedmix/tensor.hpp"

namespace guidedmix {

// Beta(alpha, alpha) mixing coefficient folded onto the labeled side:
// lambda <- min(lambda, 1 - lambda), then redrawn until below `clamp_max`
// when the clamp is tighter than 0.5.
struct LambdaPolicy {
  double alpha = 1.0;
  double clamp_max = 0.5;

  void validate() const;
  friend bool operator==(const LambdaPolicy&, const LambdaPolicy&) = default;
};

double sample_lambda(const LambdaPolicy& policy, Rng& rng);

// lambda * labeled + (1 - lambda) * unlabeled, elementwise.
Tensor mix_images(const Tensor& labeled, const Tensor& unlabeled, double lambda);

struct MixedBatch {
  Tensor images;  // [N, 3, H, W], one row per pair
  std::vector<double> lambdas;
  std::vector<std::pair<int, int>> sources;  // (first index, second index)
};

// Mixes row `first[i]` of `first_batch` with row `i` of `second_batch`, one
// lambda per pair drawn from the keyed (seed, stream, iteration, i) substream.
MixedBatch mix_pairs(const Tensor& first_batch, const std::vector<int>& first,
                     const Tensor& second_batch, const LambdaPolicy& policy, std::uint64_t seed,
                     Stream stream, std::int64_t iteration);

}  // namespace guidedmix
