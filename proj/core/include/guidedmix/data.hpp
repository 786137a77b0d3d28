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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "guidedmix/image_io.hpp"
#include "guidedmix/rng.hpp"
#include "guidedmix/tensor.hpp"

namespace guidedmix {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// RGB image with values in [0, 1], stored as a [3, H, W] tensor.
struct ImageSample {
  std::string id;
  Tensor pixels;

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
};

struct LabelMask {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> classes;

  LabelMask() = default;
  LabelMask(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), num_classes(c), classes(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return classes[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return classes[static_cast<std::size_t>(y) * width + x]; }

  // Throws ValidationError on ids >= num_classes other than kIgnoreLabel.
  void validate() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

struct LabeledSample {
  ImageSample image;
  LabelMask mask;
};

struct DatasetSplit {
  std::vector<LabeledSample> labeled;
  std::vector<ImageSample> unlabeled;
  int class_count = 0;
  std::vector<std::string> class_names;
};

enum class DatasetLayout { kVoc, kCityscapes, kSynthetic };
enum class SplitKind { kTrain, kVal };

DatasetLayout parse_layout(const std::string& name);
std::string layout_name(DatasetLayout layout);

// Which training ids carry labels: a fraction of the split, or a file of ids.
struct LabeledSelection {
  double ratio = 1.0;
  std::filesystem::path id_list;  // takes precedence when non-empty
  std::uint64_t seed = 0;
};

struct SyntheticOptions {
  int n_images = 8;
  int n_val = -1;  // -1: max(1, n_images / 4)
  int image_size = 64;
  int n_classes = 4;
  std::uint64_t seed = 0;
};

enum class ShapeKind { kCircle, kRectangle, kTriangle };

// One foreground primitive; centre lies on a pixel centre so the shape always
// covers at least that pixel.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kCircle;
  int class_id = 1;
  double cx = 0.0, cy = 0.0;
  double radius = 1.0;
  double aspect = 1.0;  // rectangle height/width ratio
  double angle = 0.0;   // triangle rotation (radians)
};

// True when the pixel centre (x + 0.5, y + 0.5) lies inside `shape`.
bool shape_covers(const ShapeSpec& shape, int y, int x);

// Writes a VOC-layout tree under `root`: JPEGImages/, SegmentationClass/,
// ImageSets/Segmentation/{train,val}.txt and class_names.txt.
void generate_synthetic_dataset(const SyntheticOptions& options, const std::filesystem::path& root);

DatasetSplit load_dataset(const std::filesystem::path& root, DatasetLayout layout, SplitKind split,
                          const LabeledSelection& selection);

struct AugmentPolicy {
  double scale_min = 0.5;
  double scale_max = 2.0;
  int crop_size = 321;
  double hflip_prob = 0.5;
  double rotation_deg = 10.0;
  double rotation_prob = 0.5;
  bool enable_scale = true;
  bool enable_hflip = true;
  bool enable_rotation = true;
  // Fill colour for padded and rotated-in image regions ([0, 1] units).
  std::array<double, 3> fill = {0.485, 0.456, 0.406};

  void validate() const;
  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

struct AugmentedSample {
  ImageSample image;
  std::optional<LabelMask> mask;
};

// Geometric building blocks; each applies the same transform to image
// (bilinear) and mask (nearest).
AugmentedSample rescale_sample(const ImageSample& image, const LabelMask* mask, double scale);
AugmentedSample rotate_sample(const ImageSample& image, const LabelMask* mask, double degrees,
                              const std::array<double, 3>& fill);
AugmentedSample hflip_sample(const ImageSample& image, const LabelMask* mask);
// Pads (fill / ignore) to at least `size` and cuts a size x size window at (top, left).
AugmentedSample crop_sample(const ImageSample& image, const LabelMask* mask, int size, int top,
                            int left, const std::array<double, 3>& fill);

// scale -> rotation -> flip -> random crop.
AugmentedSample augment(const ImageSample& image, const LabelMask* mask,
                        const AugmentPolicy& policy, Rng& rng);

// partner[u] is the labeled index paired with unlabeled index u.
enum class PairingStrategy { kSimilar, kRandom };

struct PairingAssignment {
  std::vector<int> partner;
  PairingStrategy strategy = PairingStrategy::kRandom;
};

struct PairedBatch {
  std::vector<LabeledSample> labeled;
  std::vector<ImageSample> unlabeled;
  std::vector<int> pairing;
  std::int64_t iteration = 0;
};

using PairingFn = std::function<PairingAssignment(const PairedBatch&, Rng&)>;

// Endless, iteration-indexed stream of augmented batches. Labeled samples are
// drawn with replacement; unlabeled ones walk seeded per-epoch permutations.
// Every random choice is keyed by (seed, iteration, slot), so a batch depends
// only on its index.
class BatchStream {
 public:
  BatchStream(const DatasetSplit& split, int batch_size, AugmentPolicy policy, std::uint64_t seed,
              PairingFn pairing_fn = {});

  PairedBatch next();
  PairedBatch batch_at(std::int64_t iteration);
  std::int64_t iteration() const { return iteration_; }
  void seek(std::int64_t iteration) { iteration_ = iteration; }

 private:
  int unlabeled_index(std::int64_t position);

  const DatasetSplit* split_;
  int batch_size_;
  AugmentPolicy policy_;
  std::uint64_t seed_;
  PairingFn pairing_fn_;
  std::int64_t iteration_ = 0;
  std::int64_t cached_epoch_ = -1;
  std::vector<int> epoch_order_;
};

BatchStream make_batches(const DatasetSplit& split, int batch_size, PairingFn pairing_fn,
                         std::uint64_t seed, AugmentPolicy policy);

// Conversions between on-disk rasters and in-memory samples.
ImageSample image_from_raster(std::string id, const Raster& raster);
Raster raster_from_image(const ImageSample& image);

}  // namespace guidedmix
