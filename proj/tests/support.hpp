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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "guidedmix/autograd.hpp"
#include "guidedmix/tensor.hpp"

namespace guidedmix::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(gen);
  return t;
}

// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central differences of a scalar function with respect to `param`'s value.
inline Tensor numeric_gradient(const std::function<double()>& f, Tensor& param, double step = 1e-5) {
  Tensor g(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + step;
    const double up = f();
    param[i] = keep - step;
    const double down = f();
    param[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Analytic vs numeric gradient of `build(inputs)` (a scalar) for every input.
inline std::vector<double> gradient_errors(const std::function<Var(const std::vector<Var>&)>& build,
                                           std::vector<Var> inputs, double step = 1e-5) {
  for (auto& v : inputs) v.zero_grad();
  backward(build(inputs));
  std::vector<double> errors;
  for (auto& v : inputs) {
    const Tensor analytic = v.grad();
    const Tensor numeric = numeric_gradient(
        [&] {
          NoGradGuard guard;
          return build(inputs).item();
        },
        v.mutable_value(), step);
    errors.push_back(relative_error(analytic, numeric));
  }
  return errors;
}

// Random projection of a tensor-valued op onto a scalar, so every output
// element contributes to the checked gradient.
inline Var project(const Var& out, std::uint64_t seed) {
  const Tensor w = random_tensor(out.shape(), seed);
  const Tensor& v = out.value();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
  return Var::from_op(Tensor({1}, std::vector<double>{s}), {out}, [w](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("guidedmix_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace guidedmix::testing
