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

#include <vector>

#include "guidedmix/autograd.hpp"

namespace guidedmix::ops {

// 2-d convolution on NCHW input with a [Cout, Cin, k, k] kernel. `bias` may
// be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

// Concatenates NCHW tensors along the channel axis.
Var concat_channels(const std::vector<Var>& parts);

// Mean over the bins start=floor(i*in/out), end=ceil((i+1)*in/out).
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);

// Half-pixel-centre bilinear resampling (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

// out[y*r+dy, x*r+dx, c] = in[y, x, c*r*r + dy*r + dx].
Var pixel_shuffle(const Var& x, int r);
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

// Softmax over the channel axis of an NCHW map, per pixel.
Var softmax_channels(const Var& x);
Tensor softmax_channels(const Tensor& x);

// [N, C, H, W] -> [N, C].
Var global_avg_pool(const Var& x);

// x: [N, D], weight: [K, D], bias: [K] -> [N, K].
Var linear(const Var& x, const Var& weight, const Var& bias);

// Non-local aggregation per sample: out_n = sum_m softmax_m(Q_n . K_m) V_m.
// q, k: [N, Ck, H, W]; v: [N, Cv, H, W]; result has the shape of v.
Var attention_aggregate(const Var& q, const Var& k, const Var& v);

// Row-softmax attention matrix [P, P] of sample `n`, P = H*W.
Tensor attention_weights(const Tensor& q, const Tensor& k, int n);

// Gathers samples along the batch axis; gradients scatter-add back.
Var gather_batch(const Var& x, const std::vector<int>& indices);

// Sum of `weights[i] * terms[i]` over scalar terms.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

}  // namespace guidedmix::ops
