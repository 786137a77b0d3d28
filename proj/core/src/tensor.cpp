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

#include "guidedmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "guidedmix/error.hpp"

namespace guidedmix {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ValidationError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ValidationError("tensor storage of " + std::to_string(data_.size()) +
                          " values does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::batch_slice(int begin, int end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin > end) {
    throw ValidationError("invalid batch slice of " + shape_string(shape_));
  }
  const std::size_t per = shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  std::vector<double> values(data_.begin() + begin * per, data_.begin() + end * per);
  return Tensor(std::move(out_shape), std::move(values));
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ValidationError("cannot stack zero tensors");
  const Shape& first = items.front().shape();
  Shape inner(first.begin() + 1, first.end());
  int total = 0;
  for (const auto& t : items) {
    Shape s(t.shape().begin() + 1, t.shape().end());
    if (s != inner) {
      throw ValidationError("stack shape mismatch: " + shape_string(first) + " vs " +
                            shape_string(t.shape()));
    }
    total += t.shape()[0];
  }
  Shape out_shape = first;
  out_shape[0] = total;
  std::vector<double> values;
  values.reserve(shape_numel(out_shape));
  for (const auto& t : items) values.insert(values.end(), t.storage().begin(), t.storage().end());
  return Tensor(std::move(out_shape), std::move(values));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace guidedmix
