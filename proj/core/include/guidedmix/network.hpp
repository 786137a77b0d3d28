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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "guidedmix/autograd.hpp"
#include "guidedmix/data.hpp"

namespace guidedmix {

// Layer widths of the segmentation model. Presets: "tiny" (two residual
// stages, for tests and desk-scale runs), "resnet18", "resnet50" (widths and
// depths only; blocks are basic residual blocks).
struct ModelConfig {
  std::string arch = "tiny";
  int num_classes = 21;
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32};
  int blocks_per_stage = 1;
  int psp_channels = 32;
  std::vector<int> psp_bins = {1, 2, 3, 6};
  int decoder_channels = 16;
  int mitrans_count = 1;

  static ModelConfig preset(const std::string& arch, int num_classes);
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Normalization {
  std::array<double, 3> mean = {0.485, 0.456, 0.406};
  std::array<double, 3> stddev = {0.229, 0.224, 0.225};
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

// Stacks [3, H, W] samples into a normalized [N, 3, H, W] network input.
Tensor make_input_batch(std::span<const ImageSample> images, const Normalization& norm);
Tensor make_input_batch(std::span<const LabeledSample> samples, const Normalization& norm);

struct NamedParam {
  std::string name;
  std::string group;  // encoder | psp | mitrans | decoder | classifier
  Var var;
};

// Collects the mean activation of every convolution in forward order.
struct ActivationProbe {
  std::vector<std::pair<std::string, double>> means;
  void record(const std::string& layer, const Tensor& activation);
};

class SegmentationModel {
 public:
  static constexpr int kOutputStride = 16;

  SegmentationModel(ModelConfig config, std::uint64_t seed);
  // Copies own their parameters.
  SegmentationModel(const SegmentationModel& other);
  SegmentationModel& operator=(const SegmentationModel& other);
  SegmentationModel(SegmentationModel&&) noexcept = default;
  SegmentationModel& operator=(SegmentationModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }

  struct EncoderOutput {
    Var skip;          // stride 8, twice the spatial size of `deep`
    Var deep_pre_psp;  // stride 16, last residual stage
    Var deep;          // stride 16, after the pyramid pooling module
  };
  EncoderOutput encode(const Var& images, ActivationProbe* probe = nullptr) const;

  // All configured non-local blocks, applied in sequence.
  Var mitrans(const Var& deep, ActivationProbe* probe = nullptr) const;
  Var mitrans_block(int index, const Var& deep, ActivationProbe* probe = nullptr) const;
  // Query/key projections of block `index` (for inspecting attention maps).
  std::pair<Var, Var> mitrans_query_key(int index, const Var& deep) const;

  Var decode(const Var& deep, const Var& skip, int out_h, int out_w,
             ActivationProbe* probe = nullptr) const;
  Var classify(const Var& pooled) const;

  struct Output {
    Var logits;        // [N, C, H, W]
    Var pooled;        // [N, D] global average of the encoder output
    Var class_logits;  // [N, C - 1]
  };
  Output forward(const Tensor& images, bool use_mitrans, ActivationProbe* probe = nullptr) const;

  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  NamedParam& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  // Names of all convolution layers in forward order (MITrans included).
  std::vector<std::string> conv_layer_names(bool use_mitrans) const;
  int pooled_dim() const { return config_.psp_channels; }

  // Matches arrays by name and shape; returns names skipped with a reason.
  std::vector<std::string> load_named_arrays(const std::vector<std::pair<std::string, Tensor>>& arrays);
  std::vector<std::pair<std::string, Tensor>> named_arrays() const;

 private:
  struct Conv {
    std::string name;
    int weight = -1;
    int bias = -1;
    int stride = 1;
    int pad = 0;
  };
  struct ResidualBlock {
    Conv conv1, conv2;
    bool has_projection = false;
    Conv projection;
  };
  struct NonLocal {
    Conv query, key, value;
  };

  Conv add_conv(const std::string& name, const std::string& group, int cin, int cout, int k,
                int stride, std::uint64_t seed);
  Var apply(const Conv& conv, const Var& x, bool relu, ActivationProbe* probe) const;
  Var residual(const ResidualBlock& block, const Var& x, ActivationProbe* probe) const;
  void check_input(const Tensor& images) const;

  ModelConfig config_;
  std::vector<NamedParam> params_;
  std::vector<Conv> stem_;
  std::vector<std::vector<ResidualBlock>> stages_;
  std::vector<Conv> psp_branches_;
  Conv psp_fuse_;
  std::vector<NonLocal> nonlocal_;
  Conv up_deep_, fuse_skip_, up_fine_, head_;
  int fc_weight_ = -1, fc_bias_ = -1;
};

// Stand-alone forms of the model stages.
SegmentationModel::EncoderOutput encoder_forward(const SegmentationModel& model, const Tensor& images);
Tensor mitrans_forward(const SegmentationModel& model, const Tensor& deep);
Tensor decoder_forward(const SegmentationModel& model, const Tensor& deep, const Tensor& skip,
                       int out_h, int out_w);
Tensor classifier_forward(const SegmentationModel& model, const Tensor& pooled);
SegmentationModel::Output full_forward(const SegmentationModel& model, const Tensor& images,
                                       bool use_mitrans);

}  // namespace guidedmix
