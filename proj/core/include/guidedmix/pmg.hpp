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

#include <string>

#include "guidedmix/tensor.hpp"

namespace guidedmix {

// Pseudo-mask recovery from mixed predictions. The subtraction is the same
// whichever space the maps live in (raw logits by default, or per-pixel
// softmax); results are plain tensors and therefore carry no gradient.
enum class DecoupleMode { kHard, kSoft };
enum class DecoupleSpace { kLogits, kProbabilities };

DecoupleMode parse_decouple(const std::string& name);
std::string decouple_name(DecoupleMode mode);
DecoupleSpace parse_decouple_space(const std::string& name);
std::string decouple_space_name(DecoupleSpace space);

// mixed - labeled
Tensor hard_decouple(const Tensor& mixed, const Tensor& labeled);
// mixed - lambda * labeled
Tensor soft_decouple(const Tensor& mixed, const Tensor& labeled, double lambda);
Tensor decouple(DecoupleMode mode, const Tensor& mixed, const Tensor& labeled, double lambda);
// Target for the partner of a labeled-labeled mix: mixed - seed prediction.
Tensor decouple_labeled(const Tensor& mixed, const Tensor& labeled);

}  // namespace guidedmix
