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
#include <span>
#include <string>
#include <vector>

#include "guidedmix/data.hpp"
#include "guidedmix/image_io.hpp"
#include "guidedmix/network.hpp"
#include "guidedmix/training.hpp"

namespace guidedmix {

// counts[g * C + p]: pixels with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  int num_classes() const { return num_classes_; }
  std::int64_t& at(int truth, int predicted);
  std::int64_t at(int truth, int predicted) const;
  std::int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int num_classes_ = 0;
  std::vector<std::int64_t> counts_;
};

// Adds one prediction; pixels whose ground truth is kIgnoreLabel are skipped.
void confusion_accumulate(ConfusionMatrix& cm, const LabelMask& pred, const LabelMask& gt);

// Per-class IoU; classes with an empty union have no value.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);
// Mean of the defined per-class IoUs; 0 (with a warning) when none is defined.
double miou(const ConfusionMatrix& cm);

struct MetricsRecord {
  double miou = 0.0;
  std::vector<std::optional<double>> class_iou;
  ConfusionMatrix confusion;
  std::size_t images = 0;
};

using Predictor = std::function<LabelMask(const ImageSample&)>;

// Whole-image argmax prediction (input padded to the network stride).
LabelMask predict_mask(const SegmentationModel& model, const ImageSample& image, bool use_mitrans,
                       const Normalization& norm);

MetricsRecord evaluate(const Predictor& predictor, const DatasetSplit& val);
MetricsRecord evaluate(const SegmentationModel& model, const DatasetSplit& val, bool use_mitrans,
                       const Normalization& norm);

// Ablation axes; every combination is trained once per seed. Supervised-only
// rows (omega = 0) are added per MITrans setting when include_suponly is set.
struct AblationGrid {
  std::vector<PairingStrategy> pairing = {PairingStrategy::kSimilar};
  std::vector<bool> mitrans = {true};
  std::vector<DecoupleMode> decouple = {DecoupleMode::kSoft};
  std::vector<double> lambda_clamp = {0.5};
  std::vector<std::uint64_t> seeds = {0};
  bool include_suponly = false;

  void validate() const;
};

struct AblationCell {
  std::string pairing;   // similar | random | suponly
  bool mitrans = true;
  std::string decouple;  // hard | soft | none
  double lambda_clamp = 0.5;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::optional<double> miou;
  std::string error;
};

std::vector<AblationCell> expand_grid(const AblationGrid& grid, const TrainConfig& base);

// Grid file: the axis arrays above at top level, `base_config = "path"`
// (relative to the grid file) and/or a [base] section of config overrides.
AblationGrid parse_grid(const std::string& text, const std::filesystem::path& grid_dir,
                        TrainConfig* base);

struct AblationTable {
  std::vector<AblationCell> cells;

  // pairing,mitrans,decouple,lambda_clamp,seed,miou
  std::string to_csv() const;
  // Mean and standard deviation over seeds per row.
  std::string to_markdown() const;
};

using CellRunner = std::function<double(const AblationCell&)>;

// Runs every cell in order. Failing cells keep their error message and the
// rest still run. The default runner trains with train().
AblationTable run_ablation(const AblationGrid& grid, const TrainConfig& base, CellRunner runner = {},
                           const std::function<void(const AblationCell&)>& on_cell = {});

struct ActivationProfile {
  std::vector<std::string> layers;
  std::vector<double> unlabeled;
  std::vector<double> mixed;

  std::string to_csv() const;
  // Two-series line plot.
  std::string to_svg() const;
};

ActivationProfile mean_activation_profile(const SegmentationModel& model, const ImageSample& unlabeled,
                                          const ImageSample& mixed, bool use_mitrans,
                                          const Normalization& norm);

struct ExportReport {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> failures;
};

// <id>.png holds raw class ids, <id>_color.png the palette rendering; '/' in
// ids becomes '_'.
ExportReport export_predictions(const SegmentationModel& model, std::span<const ImageSample> images,
                                const std::filesystem::path& out_dir, const Palette& palette,
                                bool use_mitrans, const Normalization& norm);

}  // namespace guidedmix
