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
#include <string>
#include <vector>

#include "guidedmix/training.hpp"

namespace guidedmix {

// One value of the TOML-style config text: scalars and flat arrays.
struct ConfigValue {
  enum class Kind { kBool, kInt, kFloat, kString, kArray };
  Kind kind = Kind::kInt;
  bool boolean = false;
  std::int64_t integer = 0;
  double number = 0.0;
  std::string text;
  std::vector<ConfigValue> items;

  double as_double(const std::string& key) const;
  std::int64_t as_int(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  const std::vector<ConfigValue>& as_array(const std::string& key) const;
};

struct ConfigEntry {
  std::string key;  // fully dotted, e.g. "lambda.clamp_max"
  ConfigValue value;
  int line = 0;
};

// Sections ([name]), dotted keys, strings, booleans, numbers, flat arrays and
// '#' comments. Syntax problems and duplicate keys raise FormatError with the
// line number.
std::vector<ConfigEntry> parse_document(const std::string& text);

// Sets one field; unknown keys and wrong value types raise ConfigurationError.
void apply_config_entry(TrainConfig& config, const ConfigEntry& entry);

TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config(const std::filesystem::path& path);

// Every field, resolved, in a form parse_config_text reads back unchanged.
std::string echo_config(const TrainConfig& config);
// 16 hex digits of the FNV-1a hash of echo_config().
std::string config_hash(const TrainConfig& config);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace guidedmix
