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

#include "guidedmix/mixing.hpp"

#include <algorithm>

#include "guidedmix/error.hpp"

namespace guidedmix {

void LambdaPolicy::validate() const {
  if (!(alpha > 0.0)) throw ConfigurationError("lambda.alpha must be > 0");
  if (!(clamp_max > 0.0) || clamp_max > 0.5) {
    throw ConfigurationError("lambda.clamp_max must lie in (0, 0.5]");
  }
}

double sample_lambda(const LambdaPolicy& policy, Rng& rng) {
  policy.validate();
  for (;;) {
    double lambda = rng.beta(policy.alpha, policy.alpha);
    lambda = std::min(lambda, 1.0 - lambda);
    if (policy.clamp_max >= 0.5 || lambda < policy.clamp_max) return lambda;
  }
}

Tensor mix_images(const Tensor& labeled, const Tensor& unlabeled, double lambda) {
  if (labeled.shape() != unlabeled.shape()) {
    throw ValidationError("mix_images shape mismatch " + shape_string(labeled.shape()) + " vs " +
                          shape_string(unlabeled.shape()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("mixing lambda must lie in [0, 1]");
  Tensor out(labeled.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lambda * labeled[i] + (1.0 - lambda) * unlabeled[i];
  }
  return out;
}

MixedBatch mix_pairs(const Tensor& first_batch, const std::vector<int>& first,
                     const Tensor& second_batch, const LambdaPolicy& policy, std::uint64_t seed,
                     Stream stream, std::int64_t iteration) {
  if (first_batch.rank() != 4 || second_batch.rank() != 4 ||
      static_cast<int>(first.size()) != second_batch.dim(0)) {
    throw ValidationError("mix_pairs needs NCHW batches and one partner per row");
  }
  const int n = second_batch.dim(0);
  MixedBatch out;
  std::vector<Tensor> rows;
  for (int i = 0; i < n; ++i) {
    if (first[i] < 0 || first[i] >= first_batch.dim(0)) {
      throw ValidationError("mix_pairs partner index out of range");
    }
    Rng rng = Rng::keyed(seed, stream,
                         {static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(i)});
    const double lambda = sample_lambda(policy, rng);
    rows.push_back(mix_images(first_batch.batch_slice(first[i], first[i] + 1),
                              second_batch.batch_slice(i, i + 1), lambda));
    out.lambdas.push_back(lambda);
    out.sources.emplace_back(first[i], i);
  }
  out.images = Tensor::stack(rows);
  return out;
}

}  // namespace guidedmix
