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

#include "guidedmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "guidedmix/error.hpp"
#include "guidedmix/pairing.hpp"

namespace guidedmix {
namespace fs = std::filesystem;

void LabelMask::validate() const {
  if (classes.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("label mask storage does not match its size");
  }
  for (std::uint8_t v : classes) {
    if (v != kIgnoreLabel && v >= num_classes) {
      throw ValidationError("label mask contains class id " + std::to_string(v) +
                            " outside [0, " + std::to_string(num_classes - 1) + "]");
    }
  }
}

DatasetLayout parse_layout(const std::string& name) {
  if (name == "voc") return DatasetLayout::kVoc;
  if (name == "cityscapes") return DatasetLayout::kCityscapes;
  if (name == "synthetic") return DatasetLayout::kSynthetic;
  throw ConfigurationError("unknown dataset layout '" + name + "'");
}

std::string layout_name(DatasetLayout layout) {
  switch (layout) {
    case DatasetLayout::kVoc:
      return "voc";
    case DatasetLayout::kCityscapes:
      return "cityscapes";
    case DatasetLayout::kSynthetic:
      return "synthetic";
  }
  return "voc";
}

ImageSample image_from_raster(std::string id, const Raster& raster) {
  if (raster.channels != 3) throw FormatError("image '" + id + "' is not RGB");
  ImageSample out{std::move(id), Tensor({3, raster.height, raster.width})};
  const std::size_t plane = static_cast<std::size_t>(raster.height) * raster.width;
  for (int y = 0; y < raster.height; ++y)
    for (int x = 0; x < raster.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.pixels[c * plane + static_cast<std::size_t>(y) * raster.width + x] =
            raster.at(y, x, c) / 255.0;
  return out;
}

Raster raster_from_image(const ImageSample& image) {
  Raster out{image.height(), image.width(), 3, {}};
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  const std::size_t plane = static_cast<std::size_t>(out.height) * out.width;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = image.pixels[c * plane + static_cast<std::size_t>(y) * out.width + x];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes.

bool shape_covers(const ShapeSpec& shape, int y, int x) {
  const double dx = x + 0.5 - shape.cx;
  const double dy = y + 0.5 - shape.cy;
  switch (shape.kind) {
    case ShapeKind::kCircle:
      return dx * dx + dy * dy <= shape.radius * shape.radius;
    case ShapeKind::kRectangle:
      return std::abs(dx) <= shape.radius && std::abs(dy) <= shape.radius * shape.aspect;
    case ShapeKind::kTriangle: {
      double vx[3], vy[3];
      for (int k = 0; k < 3; ++k) {
        const double a = shape.angle + k * 2.0 * std::numbers::pi / 3.0;
        vx[k] = shape.radius * std::cos(a);
        vy[k] = shape.radius * std::sin(a);
      }
      bool has_neg = false, has_pos = false;
      for (int k = 0; k < 3; ++k) {
        const int j = (k + 1) % 3;
        const double cross = (vx[j] - vx[k]) * (dy - vy[k]) - (vy[j] - vy[k]) * (dx - vx[k]);
        has_neg = has_neg || cross < 0.0;
        has_pos = has_pos || cross > 0.0;
      }
      return !(has_neg && has_pos);
    }
  }
  return false;
}

namespace {

std::vector<std::string> synthetic_class_names(int n_classes) {
  const std::vector<std::string> base = {"background", "circle", "rectangle", "triangle"};
  std::vector<std::string> names;
  for (int c = 0; c < n_classes; ++c) {
    names.push_back(c < static_cast<int>(base.size()) ? base[c] : "class_" + std::to_string(c));
  }
  return names;
}

std::vector<std::string> voc_class_names() {
  return {"background", "aeroplane", "bicycle",   "bird",  "boat",        "bottle", "bus",
          "car",        "cat",       "chair",     "cow",   "diningtable", "dog",    "horse",
          "motorbike",  "person",    "pottedplant", "sheep", "sofa",      "train",  "tvmonitor"};
}

std::vector<std::string> cityscapes_class_names() {
  return {"road",  "sidewalk", "building", "wall",       "fence", "pole",  "traffic light",
          "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
          "truck", "bus",      "train",    "motorcycle", "bicycle"};
}

void render_synthetic(Rng& rng, int size, int n_classes, Raster& image, Raster& mask) {
  image = Raster{size, size, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3)};
  mask = Raster{size, size, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 0)};

  // Low-saturation background: a gray level with a small colour cast.
  const double gray = rng.uniform(0.3, 0.7);
  std::array<double, 3> base{};
  for (auto& b : base) b = gray + rng.uniform(-0.08, 0.08);
  struct Grating {
    double fx, fy, phase;
    std::array<double, 3> amp;
  };
  std::array<Grating, 2> gratings{};
  for (auto& g : gratings) {
    const double freq = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / size;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    g.fx = freq * std::cos(theta);
    g.fy = freq * std::sin(theta);
    g.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (auto& a : g.amp) a = rng.uniform(-0.12, 0.12);
  }

  const int max_class = std::min(3, n_classes - 1);
  const int n_shapes = rng.uniform_int(1, 3);
  std::vector<ShapeSpec> shapes;
  std::vector<std::array<double, 3>> colors;
  for (int s = 0; s < n_shapes; ++s) {
    ShapeSpec shape;
    shape.class_id = rng.uniform_int(1, max_class);
    shape.kind = static_cast<ShapeKind>(shape.class_id - 1);
    shape.radius = std::max(1.0, rng.uniform(0.12, 0.28) * size);
    shape.cx = rng.uniform_int(0, size - 1) + 0.5;
    shape.cy = rng.uniform_int(0, size - 1) + 0.5;
    shape.aspect = rng.uniform(0.5, 1.0);
    shape.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // Each class has a colour prototype; the per-object jitter is wide
    // enough that colour alone is ambiguous.
    static constexpr std::array<std::array<double, 3>, 3> kPrototype = {
        {{0.85, 0.3, 0.25}, {0.3, 0.8, 0.35}, {0.3, 0.35, 0.85}}};
    std::array<double, 3> color{};
    for (int c = 0; c < 3; ++c) {
      color[c] = std::clamp(kPrototype[shape.class_id - 1][c] + rng.uniform(-0.25, 0.25), 0.0, 1.0);
    }
    shapes.push_back(shape);
    colors.push_back(color);
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      std::array<double, 3> px = base;
      for (const auto& g : gratings) {
        const double wave = std::sin(g.fx * x + g.fy * y + g.phase);
        for (int c = 0; c < 3; ++c) px[c] += g.amp[c] * wave;
      }
      for (std::size_t s = 0; s < shapes.size(); ++s) {
        if (shape_covers(shapes[s], y, x)) {
          px = colors[s];
          mask.at(y, x) = static_cast<std::uint8_t>(shapes[s].class_id);
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double v = px[c] + rng.normal(0.0, 0.04);
        image.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
}

std::vector<std::string> read_id_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing split file " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(first, last - first + 1));
  }
  return ids;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

struct SampleLocation {
  std::string id;
  fs::path image;
  fs::path mask;
};

std::vector<SampleLocation> list_samples(const fs::path& root, DatasetLayout layout,
                                         SplitKind split) {
  const std::string split_name = split == SplitKind::kTrain ? "train" : "val";
  std::vector<SampleLocation> out;
  if (layout == DatasetLayout::kCityscapes) {
    const fs::path images = root / "leftImg8bit" / split_name;
    if (!fs::is_directory(images)) throw FormatError("missing directory " + images.string());
    const std::string suffix = "_leftImg8bit.png";
    for (const auto& entry : fs::recursive_directory_iterator(images)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_regular_file() || name.size() <= suffix.size() ||
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      const std::string stem = name.substr(0, name.size() - suffix.size());
      const fs::path rel = fs::relative(entry.path().parent_path(), images);
      out.push_back({(rel / stem).generic_string(), entry.path(),
                     root / "gtFine" / split_name / rel / (stem + "_gtFine_labelTrainIds.png")});
    }
    std::sort(out.begin(), out.end(),
              [](const SampleLocation& a, const SampleLocation& b) { return a.id < b.id; });
    return out;
  }
  for (const auto& id : read_id_file(root / "ImageSets" / "Segmentation" / (split_name + ".txt"))) {
    out.push_back({id, root / "JPEGImages" / (id + ".jpg"),
                   root / "SegmentationClass" / (id + ".png")});
  }
  return out;
}

LabelMask load_mask(const SampleLocation& loc, int class_count) {
  if (!fs::exists(loc.mask)) throw FormatError("missing mask for labeled id '" + loc.id + "'");
  const Raster raster = read_label_png(loc.mask);
  if (raster.channels != 1) throw FormatError("mask for '" + loc.id + "' is not single-channel");
  LabelMask mask(raster.height, raster.width, class_count);
  mask.classes = raster.pixels;
  mask.validate();
  return mask;
}

// Bilinear lookup at continuous pixel coordinates; out-of-image taps read `fill`.
double sample_bilinear(const Tensor& pixels, int c, double sy, double sx, double fill) {
  const int h = pixels.dim(1), w = pixels.dim(2);
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double fy = sy - y0, fx = sx - x0;
  auto tap = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return fill;
    return pixels[(static_cast<std::size_t>(c) * h + y) * w + x];
  };
  double v = 0.0;
  if (1.0 - fy > 0.0) {
    if (1.0 - fx > 0.0) v += (1.0 - fy) * (1.0 - fx) * tap(y0, x0);
    if (fx > 0.0) v += (1.0 - fy) * fx * tap(y0, x0 + 1);
  }
  if (fy > 0.0) {
    if (1.0 - fx > 0.0) v += fy * (1.0 - fx) * tap(y0 + 1, x0);
    if (fx > 0.0) v += fy * fx * tap(y0 + 1, x0 + 1);
  }
  return v;
}

void check_mask_shape(const ImageSample& image, const LabelMask* mask) {
  if (mask && (mask->height != image.height() || mask->width != image.width())) {
    throw ValidationError("mask " + std::to_string(mask->height) + "x" +
                          std::to_string(mask->width) + " does not match image '" + image.id +
                          "'");
  }
}

}  // namespace

void generate_synthetic_dataset(const SyntheticOptions& options, const fs::path& root) {
  if (options.n_classes < 2) throw ConfigurationError("synthetic dataset needs n_classes >= 2");
  if (options.n_images < 1) throw ConfigurationError("synthetic dataset needs n_images >= 1");
  if (options.image_size < 1) throw ConfigurationError("synthetic image_size must be >= 1");
  std::error_code ec;
  for (const char* sub : {"JPEGImages", "SegmentationClass", "ImageSets/Segmentation"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw IoError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  const int n_val = options.n_val >= 0 ? options.n_val : std::max(1, options.n_images / 4);
  const Palette palette = voc_palette();
  auto emit = [&](const std::string& prefix, int count, std::uint64_t tag) {
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05d", prefix.c_str(), i);
      Rng rng = Rng::keyed(options.seed, Stream::kSynthetic,
                           {tag, static_cast<std::uint64_t>(i)});
      Raster image, mask;
      render_synthetic(rng, options.image_size, options.n_classes, image, mask);
      write_jpeg(root / "JPEGImages" / (std::string(id) + ".jpg"), image, 95);
      write_png_indexed(root / "SegmentationClass" / (std::string(id) + ".png"), mask, palette);
      ids.emplace_back(id);
    }
    return ids;
  };
  write_lines(root / "ImageSets" / "Segmentation" / "train.txt", emit("train", options.n_images, 0));
  write_lines(root / "ImageSets" / "Segmentation" / "val.txt", emit("val", n_val, 1));
  write_lines(root / "class_names.txt", synthetic_class_names(options.n_classes));
}

DatasetSplit load_dataset(const fs::path& root, DatasetLayout layout, SplitKind split,
                          const LabeledSelection& selection) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  DatasetSplit out;
  switch (layout) {
    case DatasetLayout::kVoc:
      out.class_names = voc_class_names();
      break;
    case DatasetLayout::kCityscapes:
      out.class_names = cityscapes_class_names();
      break;
    case DatasetLayout::kSynthetic:
      out.class_names = read_id_file(root / "class_names.txt");
      break;
  }
  out.class_count = static_cast<int>(out.class_names.size());
  if (out.class_count < 2) throw FormatError("dataset must declare at least two classes");

  const std::vector<SampleLocation> samples = list_samples(root, layout, split);
  std::vector<bool> is_labeled(samples.size(), false);
  if (!selection.id_list.empty()) {
    std::set<std::string> wanted;
    for (auto& id : read_id_file(selection.id_list)) wanted.insert(id);
    std::set<std::string> found;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (wanted.count(samples[i].id)) {
        is_labeled[i] = true;
        found.insert(samples[i].id);
      }
    }
    for (const auto& id : wanted) {
      if (!found.count(id)) throw FormatError("labeled id '" + id + "' not in split");
    }
  } else {
    if (selection.ratio < 0.0 || selection.ratio > 1.0) {
      throw ConfigurationError("labeled ratio must lie in [0, 1]");
    }
    const auto n = static_cast<long>(samples.size());
    long n_labeled = std::lround(selection.ratio * n);
    if (selection.ratio > 0.0 && n > 0) n_labeled = std::max(1L, n_labeled);
    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng = Rng::keyed(selection.seed, Stream::kSplit);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (long i = 0; i < n_labeled; ++i) is_labeled[order[i]] = true;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& loc = samples[i];
    ImageSample image = image_from_raster(loc.id, read_rgb(loc.image));
    if (is_labeled[i]) {
      LabelMask mask = load_mask(loc, out.class_count);
      check_mask_shape(image, &mask);
      out.labeled.push_back({std::move(image), std::move(mask)});
    } else {
      out.unlabeled.push_back(std::move(image));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation.

void AugmentPolicy::validate() const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min)) {
    throw ConfigurationError("augment scale range must be positive and ordered");
  }
  if (crop_size < 1) throw ConfigurationError("augment crop_size must be >= 1");
  if (hflip_prob < 0.0 || hflip_prob > 1.0 || rotation_prob < 0.0 || rotation_prob > 1.0) {
    throw ConfigurationError("augment probabilities must lie in [0, 1]");
  }
}

AugmentedSample rescale_sample(const ImageSample& image, const LabelMask* mask, double scale) {
  check_mask_shape(image, mask);
  if (!(scale > 0.0)) throw ValidationError("rescale factor must be positive");
  const int h = image.height(), w = image.width();
  const int oh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int ow = std::max(1, static_cast<int>(std::lround(w * scale)));
  AugmentedSample out{{image.id, Tensor({3, oh, ow})}, std::nullopt};
  const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < oh; ++y) {
      const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
      for (int x = 0; x < ow; ++x) {
        const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
        out.image.pixels[(static_cast<std::size_t>(c) * oh + y) * ow + x] =
            sample_bilinear(image.pixels, c, src_y, src_x, 0.0);
      }
    }
  }
  if (mask) {
    LabelMask m(oh, ow, mask->num_classes);
    for (int y = 0; y < oh; ++y) {
      const int iy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * sy)));
      for (int x = 0; x < ow; ++x) {
        const int ix = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * sx)));
        m.at(y, x) = mask->at(iy, ix);
      }
    }
    out.mask = std::move(m);
  }
  return out;
}

AugmentedSample rotate_sample(const ImageSample& image, const LabelMask* mask, double degrees,
                              const std::array<double, 3>& fill) {
  check_mask_shape(image, mask);
  const int h = image.height(), w = image.width();
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = h / 2.0, cx = w / 2.0;
  AugmentedSample out{{image.id, Tensor({3, h, w})}, std::nullopt};
  LabelMask m;
  if (mask) m = LabelMask(h, w, mask->num_classes, kIgnoreLabel);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double src_x = cx + cs * dx + sn * dy;
      const double src_y = cy - sn * dx + cs * dy;
      for (int c = 0; c < 3; ++c) {
        out.image.pixels[(static_cast<std::size_t>(c) * h + y) * w + x] =
            sample_bilinear(image.pixels, c, src_y - 0.5, src_x - 0.5, fill[c]);
      }
      if (mask) {
        const int iy = static_cast<int>(std::floor(src_y));
        const int ix = static_cast<int>(std::floor(src_x));
        if (iy >= 0 && iy < h && ix >= 0 && ix < w) m.at(y, x) = mask->at(iy, ix);
      }
    }
  }
  if (mask) out.mask = std::move(m);
  return out;
}

AugmentedSample hflip_sample(const ImageSample& image, const LabelMask* mask) {
  check_mask_shape(image, mask);
  const int h = image.height(), w = image.width();
  AugmentedSample out{{image.id, Tensor({3, h, w})}, std::nullopt};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.image.pixels[(static_cast<std::size_t>(c) * h + y) * w + x] =
            image.pixels[(static_cast<std::size_t>(c) * h + y) * w + (w - 1 - x)];
  if (mask) {
    LabelMask m(h, w, mask->num_classes);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at(y, x) = mask->at(y, w - 1 - x);
    out.mask = std::move(m);
  }
  return out;
}

AugmentedSample crop_sample(const ImageSample& image, const LabelMask* mask, int size, int top,
                            int left, const std::array<double, 3>& fill) {
  check_mask_shape(image, mask);
  if (size < 1) throw ValidationError("crop size must be >= 1");
  const int h = image.height(), w = image.width();
  const int ph = std::max(h, size), pw = std::max(w, size);
  if (top < 0 || left < 0 || top + size > ph || left + size > pw) {
    throw ValidationError("crop window outside padded image");
  }
  AugmentedSample out{{image.id, Tensor({3, size, size})}, std::nullopt};
  LabelMask m;
  if (mask) m = LabelMask(size, size, mask->num_classes, kIgnoreLabel);
  for (int y = 0; y < size; ++y) {
    const int sy = top + y;
    for (int x = 0; x < size; ++x) {
      const int sx = left + x;
      const bool inside = sy < h && sx < w;
      for (int c = 0; c < 3; ++c) {
        out.image.pixels[(static_cast<std::size_t>(c) * size + y) * size + x] =
            inside ? image.pixels[(static_cast<std::size_t>(c) * h + sy) * w + sx] : fill[c];
      }
      if (mask && inside) m.at(y, x) = mask->at(sy, sx);
    }
  }
  if (mask) out.mask = std::move(m);
  return out;
}

AugmentedSample augment(const ImageSample& image, const LabelMask* mask,
                        const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  check_mask_shape(image, mask);
  AugmentedSample cur{image, mask ? std::optional<LabelMask>(*mask) : std::nullopt};
  auto current_mask = [&]() { return cur.mask ? &*cur.mask : nullptr; };
  if (policy.enable_scale) {
    cur = rescale_sample(cur.image, current_mask(), rng.uniform(policy.scale_min, policy.scale_max));
  }
  if (policy.enable_rotation && rng.bernoulli(policy.rotation_prob)) {
    const double deg = rng.uniform(-policy.rotation_deg, policy.rotation_deg);
    cur = rotate_sample(cur.image, current_mask(), deg, policy.fill);
  }
  if (policy.enable_hflip && rng.bernoulli(policy.hflip_prob)) {
    cur = hflip_sample(cur.image, current_mask());
  }
  const int ph = std::max(cur.image.height(), policy.crop_size);
  const int pw = std::max(cur.image.width(), policy.crop_size);
  const int top = rng.uniform_int(0, ph - policy.crop_size);
  const int left = rng.uniform_int(0, pw - policy.crop_size);
  return crop_sample(cur.image, current_mask(), policy.crop_size, top, left, policy.fill);
}

// ---------------------------------------------------------------------------
// Batches.

BatchStream::BatchStream(const DatasetSplit& split, int batch_size, AugmentPolicy policy,
                         std::uint64_t seed, PairingFn pairing_fn)
    : split_(&split),
      batch_size_(batch_size),
      policy_(std::move(policy)),
      seed_(seed),
      pairing_fn_(std::move(pairing_fn)) {
  if (batch_size_ < 1) throw ConfigurationError("batch_size must be >= 1");
  if (split.labeled.empty()) throw ConfigurationError("labeled pool is empty");
  policy_.validate();
}

int BatchStream::unlabeled_index(std::int64_t position) {
  const auto pool = static_cast<std::int64_t>(split_->unlabeled.size());
  const std::int64_t epoch = position / pool;
  if (epoch != cached_epoch_) {
    epoch_order_.resize(pool);
    for (std::int64_t i = 0; i < pool; ++i) epoch_order_[i] = static_cast<int>(i);
    Rng rng = Rng::keyed(seed_, Stream::kUnlabeledPick, {static_cast<std::uint64_t>(epoch)});
    std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng.engine());
    cached_epoch_ = epoch;
  }
  return epoch_order_[position % pool];
}

PairedBatch BatchStream::batch_at(std::int64_t iteration) {
  PairedBatch batch;
  batch.iteration = iteration;
  const auto it = static_cast<std::uint64_t>(iteration);
  const int n_labeled = static_cast<int>(split_->labeled.size());
  for (int i = 0; i < batch_size_; ++i) {
    const auto slot = static_cast<std::uint64_t>(i);
    Rng pick = Rng::keyed(seed_, Stream::kLabeledPick, {it, slot});
    const LabeledSample& src = split_->labeled[pick.uniform_int(0, n_labeled - 1)];
    Rng aug = Rng::keyed(seed_, Stream::kLabeledAugment, {it, slot});
    AugmentedSample a = augment(src.image, &src.mask, policy_, aug);
    batch.labeled.push_back({std::move(a.image), std::move(*a.mask)});
  }
  if (!split_->unlabeled.empty()) {
    for (int i = 0; i < batch_size_; ++i) {
      const auto slot = static_cast<std::uint64_t>(i);
      const ImageSample& src = split_->unlabeled[unlabeled_index(iteration * batch_size_ + i)];
      Rng aug = Rng::keyed(seed_, Stream::kUnlabeledAugment, {it, slot});
      batch.unlabeled.push_back(augment(src, nullptr, policy_, aug).image);
    }
    Rng rng = Rng::keyed(seed_, Stream::kPairing, {it});
    PairingAssignment assignment =
        pairing_fn_ ? pairing_fn_(batch, rng) : pair_random(batch_size_, batch_size_, rng);
    if (assignment.partner.size() != batch.unlabeled.size()) {
      throw ConfigurationError("pairing function must cover every unlabeled sample");
    }
    for (int p : assignment.partner) {
      if (p < 0 || p >= batch_size_) throw ConfigurationError("pairing refers to a missing labeled sample");
    }
    batch.pairing = std::move(assignment.partner);
  }
  return batch;
}

PairedBatch BatchStream::next() { return batch_at(iteration_++); }

BatchStream make_batches(const DatasetSplit& split, int batch_size, PairingFn pairing_fn,
                         std::uint64_t seed, AugmentPolicy policy) {
  return BatchStream(split, batch_size, std::move(policy), seed, std::move(pairing_fn));
}

}  // namespace guidedmix
