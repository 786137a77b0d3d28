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

#include "guidedmix/losses.hpp"

#include <algorithm>
#include <cmath>

#include "guidedmix/error.hpp"

namespace guidedmix {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var cross_entropy_loss(const Var& logits, const std::vector<const LabelMask*>& labels,
                       std::uint8_t ignore, bool* no_valid_pixels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 4 || lv.dim(0) != static_cast<int>(labels.size())) {
    throw ValidationError("cross_entropy: logits " + shape_string(lv.shape()) + " vs " +
                          std::to_string(labels.size()) + " label masks");
  }
  const int nb = lv.dim(0), nc = lv.dim(1), h = lv.dim(2), w = lv.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (const LabelMask* m : labels) {
    if (!m || m->height != h || m->width != w) throw ValidationError("cross_entropy: mask shape mismatch");
    for (std::uint8_t v : m->classes) {
      if (v != ignore && v >= nc) {
        throw ValidationError("cross_entropy: class id " + std::to_string(v) + " >= " +
                              std::to_string(nc));
      }
    }
  }
  // Per-pixel softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<Tensor>(lv.shape());
  double sum = 0.0;
  std::size_t valid = 0;
  for (int n = 0; n < nb; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t y = labels[n]->classes[p];
      const double* base = lv.data() + static_cast<std::size_t>(n) * nc * plane + p;
      double mx = base[0];
      for (int c = 1; c < nc; ++c) mx = std::max(mx, base[c * plane]);
      double z = 0.0;
      for (int c = 0; c < nc; ++c) z += std::exp(base[c * plane] - mx);
      const double log_z = mx + std::log(z);
      double* pr = probs->data() + static_cast<std::size_t>(n) * nc * plane + p;
      for (int c = 0; c < nc; ++c) pr[c * plane] = std::exp(base[c * plane] - log_z);
      if (y == ignore) continue;
      sum += log_z - base[y * plane];
      ++valid;
    }
  }
  if (no_valid_pixels) *no_valid_pixels = valid == 0;
  const double loss = valid == 0 ? 0.0 : sum / static_cast<double>(valid);
  std::vector<std::vector<std::uint8_t>> targets;
  targets.reserve(labels.size());
  for (const LabelMask* m : labels) targets.push_back(m->classes);
  return Var::from_op(Tensor({1}, std::vector<double>{loss}), {logits},
                      [probs, targets = std::move(targets), valid, ignore, nb, nc, plane](Node& self) {
    if (valid == 0) return;
    const double scale = self.grad[0] / static_cast<double>(valid);
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < nb; ++n) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::uint8_t y = targets[n][p];
        if (y == ignore) continue;
        const std::size_t base = static_cast<std::size_t>(n) * nc * plane + p;
        for (int c = 0; c < nc; ++c) {
          g[base + c * plane] += scale * ((*probs)[base + c * plane] - (c == y ? 1.0 : 0.0));
        }
      }
    }
  });
}

double cross_entropy(const Tensor& logits, const LabelMask& labels, std::uint8_t ignore,
                     bool* no_valid_pixels) {
  Tensor batched = logits.rank() == 3
                       ? logits.reshaped({1, logits.dim(0), logits.dim(1), logits.dim(2)})
                       : logits;
  NoGradGuard guard;
  return cross_entropy_loss(Var(std::move(batched)), {&labels}, ignore, no_valid_pixels).item();
}

Var mse_map_loss(const Tensor& target, const Var& pred) {
  const Tensor& pv = pred.value();
  if (target.shape() != pv.shape()) {
    throw ValidationError("mse_map shape mismatch " + shape_string(target.shape()) + " vs " +
                          shape_string(pv.shape()));
  }
  if (pv.rank() != 4 && pv.rank() != 3) throw ValidationError("mse_map expects [N,C,H,W] or [C,H,W]");
  const int nb = pv.rank() == 4 ? pv.dim(0) : 1;
  const std::size_t plane = static_cast<std::size_t>(pv.dim(pv.rank() - 2)) * pv.dim(pv.rank() - 1);
  const double denom = static_cast<double>(plane) * nb;
  double sum = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = target[i] - pv[i];
    sum += d * d;
  }
  auto tgt = std::make_shared<Tensor>(target);
  return Var::from_op(Tensor({1}, std::vector<double>{sum / denom}), {pred},
                      [tgt, denom](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double scale = 2.0 * self.grad[0] / denom;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * (in.value[i] - (*tgt)[i]);
  });
}

double mse_map(const Tensor& target, const Tensor& pred) {
  NoGradGuard guard;
  return mse_map_loss(target, Var(pred)).item();
}

std::vector<int> present_classes(const LabelMask& mask) {
  std::vector<bool> seen(std::max(mask.num_classes, 1), false);
  for (std::uint8_t v : mask.classes) {
    if (v != kIgnoreLabel && v > 0 && v < mask.num_classes) seen[v] = true;
  }
  std::vector<int> out;
  for (int c = 1; c < mask.num_classes; ++c) {
    if (seen[c]) out.push_back(c - 1);
  }
  return out;
}

Var classifier_loss(const Var& logits, const std::vector<std::vector<int>>& present) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != static_cast<int>(present.size())) {
    throw ValidationError("classifier_loss: logits " + shape_string(lv.shape()) + " vs " +
                          std::to_string(present.size()) + " targets");
  }
  const int nb = lv.dim(0), k = lv.dim(1);
  auto targets = std::make_shared<Tensor>(lv.shape());
  for (int n = 0; n < nb; ++n) {
    for (int c : present[n]) {
      if (c < 0 || c >= k) throw ValidationError("classifier_loss: presence index out of range");
      (*targets)[static_cast<std::size_t>(n) * k + c] = 1.0;
    }
  }
  const double denom = static_cast<double>(nb) * k;
  double sum = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    // BCE(sigmoid(x), t) = softplus(x) - t * x
    sum += softplus(lv[i]) - (*targets)[i] * lv[i];
  }
  return Var::from_op(Tensor({1}, std::vector<double>{denom > 0 ? sum / denom : 0.0}), {logits},
                      [targets, denom](Node& self) {
    if (denom <= 0) return;
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double scale = self.grad[0] / denom;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * (sigmoid(in.value[i]) - (*targets)[i]);
  });
}

double classifier_loss(const std::vector<double>& logits, const std::vector<int>& present) {
  NoGradGuard guard;
  const Tensor t({1, static_cast<int>(logits.size())}, logits);
  return classifier_loss(Var(t), std::vector<std::vector<int>>{present}).item();
}

void RampSchedule::validate() const {
  if (!(w_max >= 0.0)) throw ConfigurationError("ramp.w_max must be >= 0");
  if (!(ramp_fraction > 0.0) || ramp_fraction > 1.0) {
    throw ConfigurationError("ramp.ramp_fraction must lie in (0, 1]");
  }
}

double unsup_weight(std::int64_t iter, std::int64_t max_iter, const RampSchedule& schedule) {
  const double ramp_len = schedule.ramp_fraction * static_cast<double>(max_iter);
  const double t = static_cast<double>(iter);
  if (t >= ramp_len) return schedule.w_max;
  const double phase = 1.0 - t / ramp_len;
  return schedule.w_max * std::exp(-5.0 * phase * phase);
}

LossBundle total_loss(const LossParts& parts, double omega) {
  for (double v : {parts.l_ce, parts.l_dec, parts.l_cla, parts.l_usup, omega}) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss term");
  }
  LossBundle b;
  b.l_ce = parts.l_ce;
  b.l_dec = parts.l_dec;
  b.l_cla = parts.l_cla;
  b.l_usup = parts.l_usup;
  b.omega_usup = omega;
  b.total = parts.l_ce + parts.l_dec + parts.l_cla + omega * parts.l_usup;
  return b;
}

}  // namespace guidedmix
