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

#include "guidedmix/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "guidedmix/error.hpp"
#include "guidedmix/ops.hpp"
#include "guidedmix/rng.hpp"

namespace guidedmix {

ModelConfig ModelConfig::preset(const std::string& arch, int num_classes) {
  ModelConfig c;
  c.arch = arch;
  c.num_classes = num_classes;
  if (arch == "tiny") {
    c.stem_channels = 16;
    c.stage_channels = {16, 32};
    c.blocks_per_stage = 1;
    c.psp_channels = 32;
    c.decoder_channels = 16;
  } else if (arch == "resnet18") {
    c.stem_channels = 64;
    c.stage_channels = {64, 128, 256};
    c.blocks_per_stage = 2;
    c.psp_channels = 256;
    c.decoder_channels = 64;
  } else if (arch == "resnet50") {
    c.stem_channels = 64;
    c.stage_channels = {256, 512, 1024};
    c.blocks_per_stage = 3;
    c.psp_channels = 512;
    c.decoder_channels = 128;
  } else {
    throw ConfigurationError("unknown model arch '" + arch + "'");
  }
  return c;
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigurationError("model.num_classes must be >= 2");
  if (stage_channels.size() < 2) throw ConfigurationError("model needs at least two residual stages");
  if (stem_channels < 1 || blocks_per_stage < 1 || decoder_channels < 1) {
    throw ConfigurationError("model widths and depths must be positive");
  }
  for (int c : stage_channels) {
    if (c < 1) throw ConfigurationError("model.stage_channels must be positive");
  }
  if (psp_channels < 2 || psp_channels % 2 != 0) {
    throw ConfigurationError("model.psp_channels must be even (attention uses half the width)");
  }
  if (psp_bins.empty()) throw ConfigurationError("model.psp_bins must not be empty");
  for (int b : psp_bins) {
    if (b < 1) throw ConfigurationError("model.psp_bins must be positive");
  }
  if (mitrans_count < 0) throw ConfigurationError("model.mitrans_count must be >= 0");
}

Tensor make_input_batch(std::span<const ImageSample> images, const Normalization& norm) {
  if (images.empty()) throw ValidationError("empty image batch");
  const int h = images.front().height(), w = images.front().width();
  Tensor out({static_cast<int>(images.size()), 3, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.pixels.rank() != 3 || img.pixels.dim(0) != 3 || img.height() != h || img.width() != w) {
      throw ValidationError("image '" + img.id + "' shape " + shape_string(img.pixels.shape()) +
                            " differs from batch shape");
    }
    for (int c = 0; c < 3; ++c) {
      const double* src = img.pixels.data() + c * plane;
      double* dst = out.data() + (n * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - norm.mean[c]) / norm.stddev[c];
    }
  }
  return out;
}

Tensor make_input_batch(std::span<const LabeledSample> samples, const Normalization& norm) {
  std::vector<ImageSample> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  return make_input_batch(images, norm);
}

void ActivationProbe::record(const std::string& layer, const Tensor& activation) {
  const double sum = std::accumulate(activation.storage().begin(), activation.storage().end(), 0.0);
  means.emplace_back(layer, activation.empty() ? 0.0 : sum / activation.size());
}

SegmentationModel::SegmentationModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::uint64_t layer = 0;
  auto conv = [&](const std::string& name, const std::string& group, int cin, int cout, int k,
                  int stride) { return add_conv(name, group, cin, cout, k, stride, splitmix64(seed + ++layer)); };

  stem_.push_back(conv("encoder.stem.0", "encoder", 3, config_.stem_channels, 3, 2));
  stem_.push_back(conv("encoder.stem.1", "encoder", config_.stem_channels, config_.stem_channels, 3, 2));
  int cin = config_.stem_channels;
  const int n_stages = static_cast<int>(config_.stage_channels.size());
  for (int s = 0; s < n_stages; ++s) {
    const int cout = config_.stage_channels[s];
    const int stage_stride = s >= n_stages - 2 ? 2 : 1;
    std::vector<ResidualBlock> blocks;
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const std::string prefix = "encoder.stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = b == 0 ? stage_stride : 1;
      ResidualBlock block;
      block.conv1 = conv(prefix + ".conv1", "encoder", cin, cout, 3, stride);
      block.conv2 = conv(prefix + ".conv2", "encoder", cout, cout, 3, 1);
      if (stride != 1 || cin != cout) {
        block.has_projection = true;
        block.projection = conv(prefix + ".proj", "encoder", cin, cout, 1, stride);
      }
      blocks.push_back(block);
      cin = cout;
    }
    stages_.push_back(std::move(blocks));
  }
  const int deep = config_.stage_channels.back();
  const int branch = std::max(1, deep / 4);
  for (int bin : config_.psp_bins) {
    psp_branches_.push_back(conv("psp.bin" + std::to_string(bin), "psp", deep, branch, 1, 1));
  }
  psp_fuse_ = conv("psp.fuse", "psp", deep + branch * static_cast<int>(config_.psp_bins.size()),
                   config_.psp_channels, 3, 1);
  const int width = config_.psp_channels;
  for (int i = 0; i < config_.mitrans_count; ++i) {
    const std::string prefix = "mitrans." + std::to_string(i);
    nonlocal_.push_back({conv(prefix + ".query", "mitrans", width, width / 2, 1, 1),
                         conv(prefix + ".key", "mitrans", width, width / 2, 1, 1),
                         conv(prefix + ".value", "mitrans", width, width, 1, 1)});
  }
  const int dec = config_.decoder_channels;
  const int skip = config_.stage_channels[n_stages - 2];
  up_deep_ = conv("decoder.up_deep", "decoder", width, 4 * dec, 3, 1);
  fuse_skip_ = conv("decoder.fuse_skip", "decoder", dec + skip, dec, 3, 1);
  up_fine_ = conv("decoder.up_fine", "decoder", dec, 4 * dec, 3, 1);
  head_ = conv("decoder.head", "decoder", dec, config_.num_classes, 1, 1);

  Rng rng(splitmix64(seed + ++layer));
  const int k = config_.num_classes - 1;
  Tensor fc({k, width});
  const double stddev = std::sqrt(2.0 / width);
  for (auto& v : fc.storage()) v = rng.normal(0.0, stddev);
  fc_weight_ = static_cast<int>(params_.size());
  params_.push_back({"classifier.weight", "classifier", Var(std::move(fc), true)});
  fc_bias_ = static_cast<int>(params_.size());
  params_.push_back({"classifier.bias", "classifier", Var(Tensor({k}), true)});
}

SegmentationModel::SegmentationModel(const SegmentationModel& other)
    : config_(other.config_),
      params_(other.params_),
      stem_(other.stem_),
      stages_(other.stages_),
      psp_branches_(other.psp_branches_),
      psp_fuse_(other.psp_fuse_),
      nonlocal_(other.nonlocal_),
      up_deep_(other.up_deep_),
      fuse_skip_(other.fuse_skip_),
      up_fine_(other.up_fine_),
      head_(other.head_),
      fc_weight_(other.fc_weight_),
      fc_bias_(other.fc_bias_) {
  for (auto& p : params_) p.var = Var(p.var.value(), true);
}

SegmentationModel& SegmentationModel::operator=(const SegmentationModel& other) {
  if (this != &other) *this = SegmentationModel(other);
  return *this;
}

SegmentationModel::Conv SegmentationModel::add_conv(const std::string& name,
                                                    const std::string& group, int cin, int cout,
                                                    int k, int stride, std::uint64_t seed) {
  Conv c;
  c.name = name;
  c.stride = stride;
  c.pad = k / 2;
  Tensor w({cout, cin, k, k});
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / (cin * k * k));
  for (auto& v : w.storage()) v = rng.normal(0.0, stddev);
  c.weight = static_cast<int>(params_.size());
  params_.push_back({name + ".weight", group, Var(std::move(w), true)});
  c.bias = static_cast<int>(params_.size());
  params_.push_back({name + ".bias", group, Var(Tensor({cout}), true)});
  return c;
}

Var SegmentationModel::apply(const Conv& conv, const Var& x, bool relu,
                             ActivationProbe* probe) const {
  Var y = ops::conv2d(x, params_[conv.weight].var, params_[conv.bias].var, conv.stride, conv.pad);
  if (relu) y = ops::relu(y);
  if (probe) probe->record(conv.name, y.value());
  return y;
}

Var SegmentationModel::residual(const ResidualBlock& block, const Var& x,
                                ActivationProbe* probe) const {
  Var h = apply(block.conv1, x, true, probe);
  h = apply(block.conv2, h, false, probe);
  Var shortcut = block.has_projection ? apply(block.projection, x, false, probe) : x;
  return ops::relu(ops::add(h, shortcut));
}

void SegmentationModel::check_input(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ValidationError("model input must be [N, 3, H, W], got " + shape_string(images.shape()));
  }
  if (images.dim(0) < 1 || images.dim(2) < kOutputStride || images.dim(3) < kOutputStride ||
      images.dim(2) % kOutputStride != 0 || images.dim(3) % kOutputStride != 0) {
    throw ValidationError("model input " + shape_string(images.shape()) +
                          " must have spatial size divisible by " + std::to_string(kOutputStride));
  }
}

SegmentationModel::EncoderOutput SegmentationModel::encode(const Var& images,
                                                           ActivationProbe* probe) const {
  check_input(images.value());
  Var x = images;
  for (const auto& c : stem_) x = apply(c, x, true, probe);
  EncoderOutput out;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const auto& block : stages_[s]) x = residual(block, x, probe);
    if (s + 2 == stages_.size()) out.skip = x;
  }
  out.deep_pre_psp = x;
  const int h = x.shape()[2], w = x.shape()[3];
  std::vector<Var> parts{x};
  for (std::size_t i = 0; i < psp_branches_.size(); ++i) {
    const int bin = config_.psp_bins[i];
    Var pooled = ops::adaptive_avg_pool(x, bin, bin);
    parts.push_back(ops::resize_bilinear(apply(psp_branches_[i], pooled, true, probe), h, w));
  }
  out.deep = apply(psp_fuse_, ops::concat_channels(parts), true, probe);
  return out;
}

std::pair<Var, Var> SegmentationModel::mitrans_query_key(int index, const Var& deep) const {
  const NonLocal& block = nonlocal_.at(index);
  return {apply(block.query, deep, false, nullptr), apply(block.key, deep, false, nullptr)};
}

Var SegmentationModel::mitrans_block(int index, const Var& deep, ActivationProbe* probe) const {
  if (deep.shape().size() != 4 || deep.shape()[1] % 2 != 0) {
    throw ConfigurationError("non-local block needs an even channel count");
  }
  const NonLocal& block = nonlocal_.at(index);
  Var q = apply(block.query, deep, false, probe);
  Var k = apply(block.key, deep, false, probe);
  Var v = apply(block.value, deep, false, probe);
  return ops::add(ops::attention_aggregate(q, k, v), deep);
}

Var SegmentationModel::mitrans(const Var& deep, ActivationProbe* probe) const {
  Var x = deep;
  for (int i = 0; i < static_cast<int>(nonlocal_.size()); ++i) x = mitrans_block(i, x, probe);
  return x;
}

Var SegmentationModel::decode(const Var& deep, const Var& skip, int out_h, int out_w,
                              ActivationProbe* probe) const {
  const Shape& ds = deep.shape();
  const Shape& ss = skip.shape();
  if (ds.size() != 4 || ss.size() != 4 || ds[0] != ss[0] || ss[2] != 2 * ds[2] ||
      ss[3] != 2 * ds[3] || ds[1] != config_.psp_channels) {
    throw ValidationError("decoder inputs " + shape_string(ds) + " / " + shape_string(ss) +
                          " violate the 2x skip contract");
  }
  Var x = ops::pixel_shuffle(apply(up_deep_, deep, true, probe), 2);
  x = apply(fuse_skip_, ops::concat_channels({x, skip}), true, probe);
  x = ops::pixel_shuffle(apply(up_fine_, x, true, probe), 2);
  x = apply(head_, x, false, probe);
  return ops::resize_bilinear(x, out_h, out_w);
}

Var SegmentationModel::classify(const Var& pooled) const {
  return ops::linear(pooled, params_[fc_weight_].var, params_[fc_bias_].var);
}

SegmentationModel::Output SegmentationModel::forward(const Tensor& images, bool use_mitrans,
                                                     ActivationProbe* probe) const {
  check_input(images);
  const Var input(images);
  EncoderOutput enc = encode(input, probe);
  Output out;
  out.pooled = ops::global_avg_pool(enc.deep);
  Var deep = use_mitrans ? mitrans(enc.deep, probe) : enc.deep;
  out.logits = decode(deep, enc.skip, images.dim(2), images.dim(3), probe);
  out.class_logits = classify(out.pooled);
  return out;
}

NamedParam& SegmentationModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigurationError("no parameter named '" + name + "'");
}

std::size_t SegmentationModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

void SegmentationModel::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::vector<std::string> SegmentationModel::conv_layer_names(bool use_mitrans) const {
  std::vector<std::string> names;
  for (const auto& c : stem_) names.push_back(c.name);
  for (const auto& stage : stages_) {
    for (const auto& b : stage) {
      names.push_back(b.conv1.name);
      names.push_back(b.conv2.name);
      if (b.has_projection) names.push_back(b.projection.name);
    }
  }
  for (const auto& c : psp_branches_) names.push_back(c.name);
  names.push_back(psp_fuse_.name);
  if (use_mitrans) {
    for (const auto& nl : nonlocal_) {
      names.push_back(nl.query.name);
      names.push_back(nl.key.name);
      names.push_back(nl.value.name);
    }
  }
  for (const Conv* c : {&up_deep_, &fuse_skip_, &up_fine_, &head_}) names.push_back(c->name);
  return names;
}

std::vector<std::string> SegmentationModel::load_named_arrays(
    const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::vector<std::string> skipped;
  for (const auto& [name, tensor] : arrays) {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const NamedParam& p) { return p.name == name; });
    if (it == params_.end()) {
      skipped.push_back(name + ": no such parameter");
      continue;
    }
    if (it->var.shape() != tensor.shape()) {
      skipped.push_back(name + ": shape " + shape_string(tensor.shape()) + " != " +
                        shape_string(it->var.shape()));
      continue;
    }
    it->var.mutable_value() = tensor;
  }
  return skipped;
}

std::vector<std::pair<std::string, Tensor>> SegmentationModel::named_arrays() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& p : params_) out.emplace_back(p.name, p.var.value());
  return out;
}

SegmentationModel::EncoderOutput encoder_forward(const SegmentationModel& model, const Tensor& images) {
  NoGradGuard guard;
  return model.encode(Var(images));
}

Tensor mitrans_forward(const SegmentationModel& model, const Tensor& deep) {
  NoGradGuard guard;
  return model.mitrans(Var(deep)).value();
}

Tensor decoder_forward(const SegmentationModel& model, const Tensor& deep, const Tensor& skip,
                       int out_h, int out_w) {
  NoGradGuard guard;
  return model.decode(Var(deep), Var(skip), out_h, out_w).value();
}

Tensor classifier_forward(const SegmentationModel& model, const Tensor& pooled) {
  NoGradGuard guard;
  return model.classify(Var(pooled)).value();
}

SegmentationModel::Output full_forward(const SegmentationModel& model, const Tensor& images,
                                       bool use_mitrans) {
  NoGradGuard guard;
  return model.forward(images, use_mitrans);
}

}  // namespace guidedmix
