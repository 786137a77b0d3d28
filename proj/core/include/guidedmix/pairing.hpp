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

#include <span>
#include <string>
#include <vector>

#include "guidedmix/data.hpp"
#include "guidedmix/rng.hpp"

namespace guidedmix {

class SegmentationModel;
struct Normalization;

struct FeatureVector {
  std::string source_id;
  std::vector<double> values;
};

// Global-average pooled encoder output per image; no parameter state changes.
std::vector<FeatureVector> pooled_features(const SegmentationModel& model,
                                           std::span<const ImageSample> images,
                                           const Normalization& norm);

double euclidean_distance(const FeatureVector& a, const FeatureVector& b);

// Each unlabeled index goes to its nearest labeled feature; ties resolve to
// the lowest labeled index.
PairingAssignment pair_similar(std::span<const FeatureVector> labeled,
                               std::span<const FeatureVector> unlabeled);
// Same rule over a precomputed distance table, rows = unlabeled.
PairingAssignment pair_similar(const std::vector<std::vector<double>>& distances);

PairingAssignment pair_random(int n_labeled, int n_unlabeled, Rng& rng);

// Partner for every labeled sample within the labeled set itself. Self
// pairing is excluded whenever at least two samples exist.
std::vector<int> pair_within_labeled(std::span<const FeatureVector> labeled,
                                     PairingStrategy strategy, Rng& rng);

PairingStrategy parse_pairing(const std::string& name);
std::string pairing_name(PairingStrategy strategy);

}  // namespace guidedmix
