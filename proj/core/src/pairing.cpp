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

#include "guidedmix/pairing.hpp"

#include <cmath>
#include <limits>

#include "guidedmix/error.hpp"
#include "guidedmix/network.hpp"
#include "guidedmix/ops.hpp"

namespace guidedmix {

std::vector<FeatureVector> pooled_features(const SegmentationModel& model,
                                           std::span<const ImageSample> images,
                                           const Normalization& norm) {
  if (images.empty()) return {};
  NoGradGuard guard;
  const Tensor input = make_input_batch(images, norm);
  const Var pooled = ops::global_avg_pool(model.encode(Var(input)).deep);
  std::vector<FeatureVector> out;
  const int d = pooled.shape()[1];
  for (std::size_t n = 0; n < images.size(); ++n) {
    const double* row = pooled.value().data() + n * d;
    out.push_back({images[n].id, std::vector<double>(row, row + d)});
  }
  return out;
}

double euclidean_distance(const FeatureVector& a, const FeatureVector& b) {
  if (a.values.size() != b.values.size()) {
    throw ValidationError("feature dimension mismatch: " + std::to_string(a.values.size()) +
                          " vs " + std::to_string(b.values.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

PairingAssignment pair_similar(const std::vector<std::vector<double>>& distances) {
  PairingAssignment out;
  out.strategy = PairingStrategy::kSimilar;
  for (const auto& row : distances) {
    if (row.empty()) throw ConfigurationError("similar pairing needs at least one labeled sample");
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j) {
      if (row[j] < row[best]) best = j;
    }
    out.partner.push_back(best);
  }
  return out;
}

PairingAssignment pair_similar(std::span<const FeatureVector> labeled,
                               std::span<const FeatureVector> unlabeled) {
  if (labeled.empty()) throw ConfigurationError("similar pairing needs at least one labeled sample");
  std::vector<std::vector<double>> distances;
  distances.reserve(unlabeled.size());
  for (const auto& u : unlabeled) {
    std::vector<double> row;
    row.reserve(labeled.size());
    for (const auto& l : labeled) row.push_back(euclidean_distance(u, l));
    distances.push_back(std::move(row));
  }
  return pair_similar(distances);
}

PairingAssignment pair_random(int n_labeled, int n_unlabeled, Rng& rng) {
  if (n_labeled < 1) throw ConfigurationError("random pairing needs at least one labeled sample");
  PairingAssignment out;
  out.strategy = PairingStrategy::kRandom;
  out.partner.reserve(n_unlabeled);
  for (int u = 0; u < n_unlabeled; ++u) out.partner.push_back(rng.uniform_int(0, n_labeled - 1));
  return out;
}

std::vector<int> pair_within_labeled(std::span<const FeatureVector> labeled,
                                     PairingStrategy strategy, Rng& rng) {
  const int n = static_cast<int>(labeled.size());
  if (n < 1) throw ConfigurationError("labeled partner selection needs at least one sample");
  std::vector<int> partner(n, 0);
  if (n == 1) return partner;
  for (int i = 0; i < n; ++i) {
    if (strategy == PairingStrategy::kRandom) {
      const int draw = rng.uniform_int(0, n - 2);
      partner[i] = draw >= i ? draw + 1 : draw;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = euclidean_distance(labeled[i], labeled[j]);
      if (d < best) {
        best = d;
        partner[i] = j;
      }
    }
  }
  return partner;
}

PairingStrategy parse_pairing(const std::string& name) {
  if (name == "similar") return PairingStrategy::kSimilar;
  if (name == "random") return PairingStrategy::kRandom;
  throw ConfigurationError("unknown pairing strategy '" + name + "'");
}

std::string pairing_name(PairingStrategy strategy) {
  return strategy == PairingStrategy::kSimilar ? "similar" : "random";
}

}  // namespace guidedmix
