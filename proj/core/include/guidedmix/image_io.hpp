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
#include <vector>

namespace guidedmix {

// 8-bit interleaved (HWC) raster as stored on disk.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// Standard 256-entry PASCAL VOC colour map.
Palette voc_palette();
// Cityscapes train-id colours (19 classes), padded to 256 with black.
Palette cityscapes_palette();

// RGB image from .png or .jpg/.jpeg (grayscale is expanded to RGB).
Raster read_rgb(const std::filesystem::path& path);

// Single-channel class-id image. Palette PNGs yield raw palette indices.
Raster read_label_png(const std::filesystem::path& path);

void write_png_rgb(const std::filesystem::path& path, const Raster& image);
// 8-bit grayscale PNG (class-id maps).
void write_png_gray(const std::filesystem::path& path, const Raster& image);
void write_png_indexed(const std::filesystem::path& path, const Raster& indices,
                       const Palette& palette);
void write_jpeg(const std::filesystem::path& path, const Raster& image, int quality = 95);

}  // namespace guidedmix
