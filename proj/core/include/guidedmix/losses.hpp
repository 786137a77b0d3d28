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
#include <vector>

#include "guidedmix/autograd.hpp"
#include "guidedmix/data.hpp"

namespace guidedmix {

// Pixel-mean cross-entropy over non-ignored pixels of [N, C, H, W] logits.
// Returns 0 and sets `*no_valid_pixels` when every pixel is ignored.
Var cross_entropy_loss(const Var& logits, const std::vector<const LabelMask*>& labels,
                       std::uint8_t ignore = kIgnoreLabel, bool* no_valid_pixels = nullptr);
// Single map: logits [C, H, W] or [1, C, H, W].
double cross_entropy(const Tensor& logits, const LabelMask& labels,
                     std::uint8_t ignore = kIgnoreLabel, bool* no_valid_pixels = nullptr);

// Squared error summed over channels and pixels, divided by H * W, averaged
// over the batch. `target` is a constant.
Var mse_map_loss(const Tensor& target, const Var& pred);
double mse_map(const Tensor& target, const Tensor& pred);

// Foreground presence (classes 1..C-1 mapped to 0..C-2); ignore pixels and
// background do not count.
std::vector<int> present_classes(const LabelMask& mask);

// Mean sigmoid binary cross-entropy of [N, C-1] logits against multi-hot
// presence targets.
Var classifier_loss(const Var& logits, const std::vector<std::vector<int>>& present);
double classifier_loss(const std::vector<double>& logits, const std::vector<int>& present);

struct RampSchedule {
  double w_max = 1.0;
  double ramp_fraction = 0.2;

  void validate() const;
  friend bool operator==(const RampSchedule&, const RampSchedule&) = default;
};

// Gaussian ramp-up: w_max * exp(-5 (1 - t/T)^2) for t < T = fraction * max_iter.
double unsup_weight(std::int64_t iter, std::int64_t max_iter, const RampSchedule& schedule);

struct LossParts {
  double l_ce = 0.0;
  double l_dec = 0.0;
  double l_cla = 0.0;
  double l_usup = 0.0;
};

struct LossBundle {
  double l_ce = 0.0;
  double l_dec = 0.0;
  double l_cla = 0.0;
  double l_usup = 0.0;
  double omega_usup = 0.0;
  double total = 0.0;
};

// total = l_ce + l_dec + l_cla + omega * l_usup; throws NumericError on
// non-finite input.
LossBundle total_loss(const LossParts& parts, double omega);

}  // namespace guidedmix
