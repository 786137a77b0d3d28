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

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "guidedmix/data.hpp"
#include "guidedmix/error.hpp"
#include "guidedmix/image_io.hpp"
#include "support.hpp"

namespace guidedmix {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageSample random_image(int h, int w, std::uint64_t seed) {
  return {"img", testing::random_tensor({3, h, w}, seed, 0, 1)};
}

LabelMask random_mask(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  LabelMask m(h, w, c);
  for (auto& v : m.classes) v = static_cast<std::uint8_t>(rng.uniform_int(0, c - 1));
  return m;
}

fs::path synthetic(const std::string& name, int n, int size = 24, std::uint64_t seed = 3) {
  const fs::path dir = testing::temp_dir(name);
  SyntheticOptions o;
  o.n_images = n;
  o.n_val = 2;
  o.image_size = size;
  o.n_classes = 4;
  o.seed = seed;
  generate_synthetic_dataset(o, dir);
  return dir;
}

TEST(Synthetic, DeterministicFiles) {
  const fs::path a = synthetic("syn_a", 3), b = synthetic("syn_b", 3), c = synthetic("syn_c", 3, 24, 4);
  for (const char* f : {"JPEGImages/train_00001.jpg", "SegmentationClass/train_00002.png",
                        "ImageSets/Segmentation/val.txt", "class_names.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_NE(slurp(a / "JPEGImages/train_00001.jpg"), slurp(c / "JPEGImages/train_00001.jpg"));
}

TEST(Synthetic, LoadsAsDataset) {
  const fs::path dir = synthetic("syn_load", 8);
  const DatasetSplit all = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {1.0, {}, 0});
  EXPECT_EQ(all.labeled.size(), 8u);
  EXPECT_EQ(all.class_count, 4);
  EXPECT_EQ(all.class_names[0], "background");
  bool any_fg = false;
  for (const auto& s : all.labeled) {
    EXPECT_EQ(s.image.height(), 24);
    for (auto v : s.mask.classes) {
      EXPECT_LT(v, 4);
      any_fg |= v > 0;
    }
  }
  EXPECT_TRUE(any_fg);
  const DatasetSplit val = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kVal, {1.0, {}, 0});
  EXPECT_EQ(val.labeled.size(), 2u);
}

TEST(Split, RatioSelectsSeededSubset) {
  const fs::path dir = synthetic("split_ratio", 8);
  const auto a = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {0.25, {}, 5});
  const auto b = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {0.25, {}, 5});
  EXPECT_EQ(a.labeled.size(), 2u);
  EXPECT_EQ(a.unlabeled.size(), 6u);
  std::set<std::string> ids;
  for (const auto& s : a.labeled) ids.insert(s.image.id);
  for (const auto& s : a.unlabeled) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 8u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.labeled[i].image.id, b.labeled[i].image.id);
  const auto none = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {0.0, {}, 5});
  EXPECT_TRUE(none.labeled.empty());
  EXPECT_THROW(load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {1.5, {}, 5}),
               ConfigurationError);
}

TEST(Split, IdListWins) {
  const fs::path dir = synthetic("split_list", 4);
  {
    std::ofstream(dir / "labeled.txt") << "train_00003\n\ntrain_00001\n";
  }
  const auto s = load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {0.0, dir / "labeled.txt", 0});
  ASSERT_EQ(s.labeled.size(), 2u);
  EXPECT_EQ(s.labeled[0].image.id, "train_00001");
  EXPECT_EQ(s.labeled[1].image.id, "train_00003");
  {
    std::ofstream(dir / "bad.txt") << "train_00009\n";
  }
  EXPECT_THROW(load_dataset(dir, DatasetLayout::kSynthetic, SplitKind::kTrain, {0.0, dir / "bad.txt", 0}),
               FormatError);
}

TEST(Layouts, VocHas21Classes) {
  const fs::path dir = testing::temp_dir("voc");
  fs::create_directories(dir / "JPEGImages");
  fs::create_directories(dir / "SegmentationClass");
  fs::create_directories(dir / "ImageSets/Segmentation");
  Raster img{4, 5, 3, std::vector<std::uint8_t>(60, 100)};
  Raster mask{4, 5, 1, std::vector<std::uint8_t>(20, 0)};
  mask.pixels[3] = 15;
  mask.pixels[4] = kIgnoreLabel;
  write_jpeg(dir / "JPEGImages/a.jpg", img);
  write_png_indexed(dir / "SegmentationClass/a.png", mask, voc_palette());
  std::ofstream(dir / "ImageSets/Segmentation/train.txt") << "a\n";
  const auto s = load_dataset(dir, DatasetLayout::kVoc, SplitKind::kTrain, {1.0, {}, 0});
  EXPECT_EQ(s.class_count, 21);
  ASSERT_EQ(s.labeled.size(), 1u);
  EXPECT_EQ(s.labeled[0].mask.at(0, 3), 15);
  EXPECT_EQ(s.labeled[0].mask.at(0, 4), kIgnoreLabel);
  EXPECT_THROW(load_dataset(dir, DatasetLayout::kVoc, SplitKind::kVal, {1.0, {}, 0}), FormatError);
}

TEST(Layouts, CityscapesNestedCities) {
  const fs::path dir = testing::temp_dir("cityscapes");
  for (const char* city : {"aachen", "bonn"}) {
    fs::create_directories(dir / "leftImg8bit/train" / city);
    fs::create_directories(dir / "gtFine/train" / city);
    Raster img{2, 3, 3, std::vector<std::uint8_t>(18, 50)};
    Raster mask{2, 3, 1, std::vector<std::uint8_t>(6, 18)};
    const std::string stem = std::string(city) + "_000000_000019";
    write_png_rgb(dir / "leftImg8bit/train" / city / (stem + "_leftImg8bit.png"), img);
    write_png_gray(dir / "gtFine/train" / city / (stem + "_gtFine_labelTrainIds.png"), mask);
  }
  const auto s = load_dataset(dir, DatasetLayout::kCityscapes, SplitKind::kTrain, {1.0, {}, 0});
  EXPECT_EQ(s.class_count, 19);
  ASSERT_EQ(s.labeled.size(), 2u);
  EXPECT_EQ(s.labeled[0].image.id, "aachen/aachen_000000_000019");
  EXPECT_EQ(s.labeled[1].mask.at(1, 2), 18);
}

TEST(Layouts, Names) {
  EXPECT_EQ(parse_layout("voc"), DatasetLayout::kVoc);
  EXPECT_EQ(layout_name(DatasetLayout::kCityscapes), "cityscapes");
  EXPECT_THROW(parse_layout("coco"), ConfigurationError);
  EXPECT_THROW(load_dataset("/nonexistent/guidedmix", DatasetLayout::kVoc, SplitKind::kTrain, {}), IoError);
}

TEST(Mask, Validate) {
  LabelMask m(1, 3, 3);
  m.classes = {0, 2, kIgnoreLabel};
  EXPECT_NO_THROW(m.validate());
  m.classes[1] = 3;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Shapes, CentrePixelCovered) {
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    ShapeSpec s;
    s.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    s.cx = rng.uniform_int(0, 30) + 0.5;
    s.cy = rng.uniform_int(0, 30) + 0.5;
    s.radius = rng.uniform(1.0, 8.0);
    s.aspect = rng.uniform(0.5, 1.0);
    s.angle = rng.uniform(0, 6.28);
    EXPECT_TRUE(shape_covers(s, static_cast<int>(s.cy), static_cast<int>(s.cx)));
    EXPECT_FALSE(shape_covers(s, static_cast<int>(s.cy) + 20, static_cast<int>(s.cx) + 20));
  }
}

TEST(Augment, FlipOracleAndInvolution) {
  const ImageSample img = random_image(5, 7, 1);
  const LabelMask mask = random_mask(5, 7, 3, 2);
  const auto f = hflip_sample(img, &mask);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      EXPECT_EQ(f.mask->at(y, x), mask.at(y, 6 - x));
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(f.image.pixels[(c * 5 + y) * 7 + x], img.pixels[(c * 5 + y) * 7 + 6 - x]);
      }
    }
  const auto back = hflip_sample(f.image, &*f.mask);
  EXPECT_EQ(back.image.pixels.storage(), img.pixels.storage());
  EXPECT_EQ(*back.mask, mask);
}

TEST(Augment, DisabledPolicyIsIdentity) {
  AugmentPolicy p;
  p.enable_scale = p.enable_hflip = p.enable_rotation = false;
  p.crop_size = 9;
  const ImageSample img = random_image(9, 9, 3);
  const LabelMask mask = random_mask(9, 9, 4, 4);
  Rng rng(1);
  const auto out = augment(img, &mask, p, rng);
  EXPECT_EQ(out.image.pixels.storage(), img.pixels.storage());
  EXPECT_EQ(*out.mask, mask);
}

TEST(Augment, DoubleScaleMaskOracle) {
  const ImageSample img = random_image(6, 5, 5);
  const LabelMask mask = random_mask(6, 5, 5, 6);
  const auto out = rescale_sample(img, &mask, 2.0);
  ASSERT_EQ(out.mask->height, 12);
  ASSERT_EQ(out.mask->width, 10);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 10; ++x) EXPECT_EQ(out.mask->at(y, x), mask.at(y / 2, x / 2));
  // Image corners copy the source corners exactly.
  EXPECT_DOUBLE_EQ(out.image.pixels[0], img.pixels[0]);
  EXPECT_DOUBLE_EQ(out.image.pixels[11 * 10 + 9], img.pixels[5 * 5 + 4]);
}

TEST(Augment, ZeroRotationIsIdentity) {
  const ImageSample img = random_image(6, 8, 7);
  const LabelMask mask = random_mask(6, 8, 3, 8);
  const auto out = rotate_sample(img, &mask, 0.0, {0, 0, 0});
  EXPECT_EQ(*out.mask, mask);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(out.image.pixels[i], img.pixels[i], 1e-15);
}

TEST(Augment, CropPadsWithFillAndIgnore) {
  const ImageSample img = random_image(3, 4, 9);
  const LabelMask mask = random_mask(3, 4, 3, 10);
  const auto out = crop_sample(img, &mask, 5, 0, 0, {0.1, 0.2, 0.3});
  EXPECT_EQ(out.mask->at(2, 3), mask.at(2, 3));
  EXPECT_EQ(out.mask->at(4, 0), kIgnoreLabel);
  EXPECT_EQ(out.mask->at(0, 4), kIgnoreLabel);
  EXPECT_DOUBLE_EQ(out.image.pixels[2 * 25 + 4 * 5 + 4], 0.3);
  EXPECT_THROW(crop_sample(img, &mask, 5, 1, 0, {0, 0, 0}), ValidationError);
}

// Random policies never invent labels: output ids come from the source or
// are IGNORE.
TEST(Augment, MaskValuesPreserved) {
  Rng gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    AugmentPolicy p;
    p.scale_min = gen.uniform(0.3, 1.0);
    p.scale_max = p.scale_min + gen.uniform(0, 1.5);
    p.crop_size = gen.uniform_int(4, 20);
    p.rotation_deg = gen.uniform(0, 45);
    p.rotation_prob = gen.uniform();
    p.hflip_prob = gen.uniform();
    const int h = gen.uniform_int(3, 16), w = gen.uniform_int(3, 16);
    LabelMask mask(h, w, 6);
    std::set<int> allowed = {kIgnoreLabel};
    for (auto& v : mask.classes) {
      v = static_cast<std::uint8_t>(gen.uniform_int(0, 2) * 2);
      allowed.insert(v);
    }
    Rng rng(trial);
    const auto out = augment(random_image(h, w, trial), &mask, p, rng);
    ASSERT_EQ(out.mask->height, p.crop_size);
    ASSERT_EQ(out.image.height(), p.crop_size);
    for (auto v : out.mask->classes) EXPECT_TRUE(allowed.count(v)) << int(v);
  }
}

TEST(Augment, InvalidPolicy) {
  AugmentPolicy p;
  p.scale_min = 2.0;
  p.scale_max = 1.0;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = AugmentPolicy{};
  p.hflip_prob = 1.5;
  EXPECT_THROW(p.validate(), ConfigurationError);
}

DatasetSplit memory_split(int n_labeled, int n_unlabeled) {
  DatasetSplit s;
  s.class_count = 3;
  for (int i = 0; i < n_labeled; ++i) {
    s.labeled.push_back({random_image(12, 12, 100 + i), random_mask(12, 12, 3, 200 + i)});
    s.labeled.back().image.id = "l" + std::to_string(i);
  }
  for (int i = 0; i < n_unlabeled; ++i) {
    s.unlabeled.push_back(random_image(12, 12, 300 + i));
    s.unlabeled.back().id = "u" + std::to_string(i);
  }
  return s;
}

AugmentPolicy small_policy() {
  AugmentPolicy p;
  p.crop_size = 8;
  return p;
}

TEST(Batches, SizesAndPairing) {
  const DatasetSplit s = memory_split(5, 30);
  BatchStream stream(s, 12, small_policy(), 1);
  const PairedBatch b = stream.next();
  EXPECT_EQ(b.labeled.size(), 12u);
  EXPECT_EQ(b.unlabeled.size(), 12u);
  ASSERT_EQ(b.pairing.size(), 12u);
  for (int p : b.pairing) {
    EXPECT_GE(p, 0);
    EXPECT_LT(p, 12);
  }
  EXPECT_EQ(stream.iteration(), 1);
}

TEST(Batches, IndexedByIteration) {
  const DatasetSplit s = memory_split(4, 9);
  BatchStream a(s, 3, small_policy(), 7), b(s, 3, small_policy(), 7);
  for (int i = 0; i < 4; ++i) a.next();
  const PairedBatch x = a.next(), y = b.batch_at(4);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(x.labeled[i].image.pixels.storage(), y.labeled[i].image.pixels.storage());
    EXPECT_EQ(x.labeled[i].mask, y.labeled[i].mask);
    EXPECT_EQ(x.unlabeled[i].pixels.storage(), y.unlabeled[i].pixels.storage());
  }
  EXPECT_EQ(x.pairing, y.pairing);
}

TEST(Batches, UnlabeledEpochsCoverPool) {
  const DatasetSplit s = memory_split(2, 6);
  AugmentPolicy p = small_policy();
  BatchStream stream(s, 3, p, 2);
  std::multiset<std::string> seen;
  for (int it = 0; it < 2; ++it) {
    for (const auto& u : stream.batch_at(it).unlabeled) seen.insert(u.id);
  }
  for (int i = 0; i < 6; ++i) EXPECT_EQ(seen.count("u" + std::to_string(i)), 1u);
}

TEST(Batches, EmptyUnlabeledPool) {
  const DatasetSplit with = memory_split(3, 5);
  DatasetSplit without = with;
  without.unlabeled.clear();
  BatchStream a(with, 4, small_policy(), 3), b(without, 4, small_policy(), 3);
  const PairedBatch x = a.batch_at(2), y = b.batch_at(2);
  EXPECT_TRUE(y.unlabeled.empty());
  EXPECT_TRUE(y.pairing.empty());
  // The labeled half does not depend on the unlabeled pool.
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(x.labeled[i].image.pixels.storage(), y.labeled[i].image.pixels.storage());
  }
}

TEST(Batches, Errors) {
  const DatasetSplit s = memory_split(2, 2);
  EXPECT_THROW(BatchStream(s, 0, small_policy(), 1), ConfigurationError);
  EXPECT_THROW(BatchStream(memory_split(0, 2), 2, small_policy(), 1), ConfigurationError);
  BatchStream bad(s, 2, small_policy(), 1, [](const PairedBatch&, Rng&) { return PairingAssignment{{0}, {}}; });
  EXPECT_THROW(bad.next(), ConfigurationError);
}

}  // namespace
}  // namespace guidedmix
