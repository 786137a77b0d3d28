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

#include <functional>
#include <memory>
#include <vector>

#include "guidedmix/tensor.hpp"

namespace guidedmix {

// One value in a reverse-mode tape. Interior nodes keep their inputs alive
// until the graph root is released.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Lazily allocated, zero-filled gradient with the shape of `value`.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  // Builds an interior node. When gradients are disabled, or no input needs
  // one, the result is a constant and `backward` is dropped.
  static Var from_op(Tensor value, const std::vector<Var>& inputs,
                     std::function<void(Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Zero tensor when no gradient has been accumulated yet.
  Tensor grad() const;
  void zero_grad();

  // Constant copy sharing no history.
  Var detach() const { return Var(node_->value, false); }

  // Scalar value of a single-element tensor.
  double item() const;

  Node& node() { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
void backward(const Var& root, double seed = 1.0);

bool grad_enabled();

// Disables graph construction for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace guidedmix
