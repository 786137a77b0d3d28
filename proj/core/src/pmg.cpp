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

#include "guidedmix/pmg.hpp"

#include "guidedmix/error.hpp"

namespace guidedmix {
namespace {

Tensor subtract_scaled(const Tensor& mixed, const Tensor& labeled, double weight) {
  if (mixed.shape() != labeled.shape()) {
    throw ValidationError("decoupling shape mismatch " + shape_string(mixed.shape()) + " vs " +
                          shape_string(labeled.shape()));
  }
  Tensor out(mixed.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mixed[i] - weight * labeled[i];
  return out;
}

}  // namespace

DecoupleMode parse_decouple(const std::string& name) {
  if (name == "hard") return DecoupleMode::kHard;
  if (name == "soft") return DecoupleMode::kSoft;
  throw ConfigurationError("unknown decouple mode '" + name + "'");
}

std::string decouple_name(DecoupleMode mode) { return mode == DecoupleMode::kHard ? "hard" : "soft"; }

DecoupleSpace parse_decouple_space(const std::string& name) {
  if (name == "logits") return DecoupleSpace::kLogits;
  if (name == "probabilities") return DecoupleSpace::kProbabilities;
  throw ConfigurationError("unknown decouple space '" + name + "'");
}

std::string decouple_space_name(DecoupleSpace space) {
  return space == DecoupleSpace::kLogits ? "logits" : "probabilities";
}

Tensor hard_decouple(const Tensor& mixed, const Tensor& labeled) {
  return subtract_scaled(mixed, labeled, 1.0);
}

Tensor soft_decouple(const Tensor& mixed, const Tensor& labeled, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("soft decoupling lambda must lie in [0, 1]");
  return subtract_scaled(mixed, labeled, lambda);
}

Tensor decouple(DecoupleMode mode, const Tensor& mixed, const Tensor& labeled, double lambda) {
  return mode == DecoupleMode::kHard ? hard_decouple(mixed, labeled)
                                     : soft_decouple(mixed, labeled, lambda);
}

Tensor decouple_labeled(const Tensor& mixed, const Tensor& labeled) {
  return subtract_scaled(mixed, labeled, 1.0);
}

}  // namespace guidedmix
