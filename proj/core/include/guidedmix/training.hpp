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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guidedmix/data.hpp"
#include "guidedmix/losses.hpp"
#include "guidedmix/mixing.hpp"
#include "guidedmix/network.hpp"
#include "guidedmix/pmg.hpp"

namespace guidedmix {

struct DataConfig {
  std::string root;
  DatasetLayout layout = DatasetLayout::kSynthetic;
  double labeled_ratio = 1.0;
  std::string labeled_list;  // id file; overrides labeled_ratio when set
  std::uint64_t split_seed = 0;
  // Keep at most this many val images (-1: all).
  int max_val = -1;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ModelSpec {
  std::string arch = "tiny";
  // Overrides of the arch preset; <= 0 / empty keeps the preset value.
  int stem_channels = 0;
  std::vector<int> stage_channels;
  int blocks_per_stage = 0;
  int psp_channels = 0;
  int decoder_channels = 0;
  int mitrans_count = 1;
  std::string pretrained;  // optional named-array archive directory

  ModelConfig resolve(int num_classes) const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct OutputConfig {
  int log_interval = 10;
  int eval_interval = -1;  // -1: max(500, max_iter / 20)
  bool checkpoints = true;

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct TrainConfig {
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double power = 0.9;
  std::int64_t max_iter = 40000;
  int batch_size = 12;
  int crop_size = 321;
  LambdaPolicy lambda;
  PairingStrategy pairing = PairingStrategy::kSimilar;
  DecoupleMode decouple = DecoupleMode::kSoft;
  DecoupleSpace decouple_space = DecoupleSpace::kLogits;
  bool use_mitrans = true;
  std::int64_t warmup_iters = -1;  // -1: 10% of max_iter
  RampSchedule ramp;
  bool use_l_dec = true;
  bool use_l_cla = true;
  // When set, the mixed-input prediction inside each decoupled map keeps its
  // gradient; only the subtracted labeled part is a constant.
  bool mixed_grad = false;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelSpec model;
  AugmentPolicy augment;  // crop_size above wins over augment.crop_size
  Normalization normalize;
  OutputConfig output;

  std::int64_t resolved_warmup() const;
  int resolved_eval_interval() const;
  AugmentPolicy resolved_augment() const;
  // Throws ConfigurationError naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Pads [N, C, H, W] on the bottom/right up to a multiple of `multiple` with
// `fill`; masks are padded with kIgnoreLabel.
Tensor pad_to_multiple(const Tensor& images, int multiple, double fill = 0.0);
LabelMask pad_mask(const LabelMask& mask, int height, int width);
// Top-left [.., .., height, width] window of a [N, C, H, W] tensor.
Tensor crop_top_left(const Tensor& maps, int height, int width);

// base_lr * (1 - iter / max_iter)^power; iterations past max_iter give 0.
double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power);

struct OptimizerState {
  std::vector<Tensor> momentum;  // one buffer per model parameter
  std::int64_t iteration = 0;
};

OptimizerState make_optimizer_state(const SegmentationModel& model);

// Classic momentum SGD with L2 decay folded into the gradient. Returns false
// (and leaves parameters and buffers untouched) on a non-finite gradient.
bool sgd_step(SegmentationModel& model, OptimizerState& state, double lr, double momentum,
              double weight_decay);

// Everything one training step needs besides the parameters: network inputs,
// labels, pairings and the detached pseudo targets.
struct StepPlan {
  Tensor labeled_input;                  // [B, 3, H, W], normalized
  std::vector<LabelMask> masks;          // B, padded like the input
  std::vector<std::vector<int>> presence;
  Tensor unlabeled_input;                // [U, 3, H, W] or empty
  Tensor unlabeled_target;               // decoupled mixed prediction, [U, C, H, W]
  std::vector<int> labeled_partner;      // B, empty when L_dec is off
  Tensor labeled_target;                 // decoupled labeled-labeled prediction
  std::vector<double> lambdas;           // per unlabeled pair
  std::vector<double> labeled_lambdas;   // per labeled pair
  std::vector<int> pairing;              // U
  bool unsup_active = false;
  bool dec_active = false;
  bool use_l_cla = true;
  // mixed_grad: the mixed inputs and the constant part subtracted from their
  // prediction (so target = space(M_mix) - offset).
  bool mixed_grad = false;
  Tensor mixed_input, mixed_offset;
  Tensor labeled_mixed_input, labeled_offset;
  DecoupleSpace space = DecoupleSpace::kLogits;  // targets and MSE predictions share it
  double omega = 0.0;
};

// Builds the differentiable objective l_ce + l_dec + l_cla + omega * l_usup
// for fixed targets. `bundle` receives the scalar parts.
Var step_objective(const SegmentationModel& model, const StepPlan& plan, bool use_mitrans,
                   LossBundle* bundle = nullptr);

struct MetricsRow {
  std::int64_t iter = 0;
  double lr = 0.0;
  LossBundle loss;
  std::optional<double> val_miou;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainResult {
  SegmentationModel model;
  std::vector<MetricsRow> history;
  double final_miou = 0.0;
  double best_miou = 0.0;
  std::int64_t best_iter = -1;
};

struct TrainOptions {
  // Output directory for metrics.csv, checkpoints and the resolved config;
  // empty keeps everything in memory.
  std::filesystem::path run_dir;
  // Checkpoint directory to continue from.
  std::filesystem::path resume_from;
  // Called after every step with the logged row (whether or not it is
  // written to the metrics file).
  std::function<void(const MetricsRow&)> on_step;
  bool progress = false;
};

class Trainer {
 public:
  Trainer(TrainConfig config, DatasetSplit train_split, std::optional<DatasetSplit> val_split);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One optimization step at the current iteration; returns its metrics row.
  MetricsRow step();
  // Evaluates the current model on the val split (0 without one).
  double evaluate_now() const;

  const SegmentationModel& model() const { return model_; }
  SegmentationModel& model() { return model_; }
  const OptimizerState& optimizer() const { return optimizer_; }
  OptimizerState& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  std::int64_t iteration() const { return optimizer_.iteration; }

  // Targets and inputs for the step at `iteration`, computed with the
  // current parameters.
  StepPlan plan_step(std::int64_t iteration, const PairedBatch& batch) const;
  PairedBatch batch_at(std::int64_t iteration) { return stream_.batch_at(iteration); }

 private:
  StepPlan base_plan(std::int64_t iteration, const PairedBatch& batch) const;
  void complete_targets(StepPlan& plan, const PairedBatch& batch, std::int64_t iteration,
                        const Tensor& labeled_logits, const Tensor& labeled_pooled,
                        const Tensor* unlabeled_pooled) const;

  TrainConfig config_;
  DatasetSplit train_;
  std::optional<DatasetSplit> val_;
  SegmentationModel model_;
  OptimizerState optimizer_;
  BatchStream stream_;
};

// Loads datasets, trains for config.max_iter iterations and writes outputs
// under options.run_dir.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

// Checkpoint directory: manifest.json (config hash, iteration, metric, array
// index), arrays.bin (little-endian float64) and config.toml.
struct Checkpoint {
  std::string config_text;
  int num_classes = 0;
  std::string config_hash;
  std::int64_t iteration = 0;
  double metric = 0.0;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

void save_named_arrays(const std::filesystem::path& dir,
                       const std::vector<std::pair<std::string, Tensor>>& arrays,
                       const std::string& manifest_extra_json = "{}");
std::vector<std::pair<std::string, Tensor>> load_named_arrays(const std::filesystem::path& dir);

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config,
                     const SegmentationModel& model, const OptimizerState& optimizer,
                     double metric);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Rebuilds the model described by a checkpoint (config + weights).
SegmentationModel model_from_checkpoint(const Checkpoint& checkpoint, TrainConfig* config = nullptr,
                                        OptimizerState* optimizer = nullptr);

}  // namespace guidedmix
