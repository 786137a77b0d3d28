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

#include "guidedmix/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "guidedmix/error.hpp"
#include "guidedmix/pairing.hpp"

namespace guidedmix {
namespace {

const char* kind_name(ConfigValue::Kind kind) {
  switch (kind) {
    case ConfigValue::Kind::kBool: return "boolean";
    case ConfigValue::Kind::kInt: return "integer";
    case ConfigValue::Kind::kFloat: return "number";
    case ConfigValue::Kind::kString: return "string";
    case ConfigValue::Kind::kArray: return "array";
  }
  return "value";
}

[[noreturn]] void type_error(const std::string& key, const char* want, ConfigValue::Kind got) {
  throw ConfigurationError(key + ": expected " + want + ", got " + kind_name(got));
}

class LineParser {
 public:
  LineParser(const std::string& text, int line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("line " + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string key() {
    skip_ws();
    std::string out;
    while (true) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                  s_[pos_] == '_' || s_[pos_] == '-')) {
        ++pos_;
      }
      if (pos_ == start) fail("expected a key");
      out += s_.substr(start, pos_ - start);
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '.') {
        out += '.';
        ++pos_;
        skip_ws();
        continue;
      }
      return out;
    }
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  ConfigValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    ConfigValue v;
    const char c = s_[pos_];
    if (c == '"') {
      v.kind = ConfigValue::Kind::kString;
      v.text = quoted();
    } else if (c == '[') {
      ++pos_;
      v.kind = ConfigValue::Kind::kArray;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      while (true) {
        ConfigValue item = value();
        if (item.kind == ConfigValue::Kind::kArray) fail("nested arrays are not supported");
        v.items.push_back(std::move(item));
        skip_ws();
        if (pos_ >= s_.size()) fail("unterminated array");
        if (s_[pos_] == ',') {
          ++pos_;
          skip_ws();
          if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            break;
          }
          continue;
        }
        if (s_[pos_] == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in array");
      }
    } else {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
             s_[pos_] != ' ' && s_[pos_] != '\t') {
        ++pos_;
      }
      const std::string token = s_.substr(start, pos_ - start);
      if (token == "true" || token == "false") {
        v.kind = ConfigValue::Kind::kBool;
        v.boolean = token == "true";
      } else {
        std::string digits;
        for (char ch : token) {
          if (ch != '_') digits += ch;
        }
        const char* first = digits.data();
        const char* last = first + digits.size();
        if (!digits.empty() && digits[0] == '+') ++first;
        v.text.assign(first, last);
        std::int64_t iv = 0;
        auto [ip, iec] = std::from_chars(first, last, iv);
        if (iec == std::errc() && ip == last) {
          v.kind = ConfigValue::Kind::kInt;
          v.integer = iv;
          v.number = static_cast<double>(iv);
        } else {
          double dv = 0.0;
          auto [dp, dec] = std::from_chars(first, last, dv);
          if (dec != std::errc() || dp != last || digits.empty()) {
            fail("cannot parse value '" + token + "'");
          }
          v.kind = ConfigValue::Kind::kFloat;
          v.number = dv;
        }
      }
    }
    return v;
  }

  std::string section() {
    expect('[');
    std::string name = key();
    expect(']');
    if (!at_end_or_comment()) fail("trailing characters after section header");
    return name;
  }

 private:
  std::string quoted() {
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unknown escape \\") + e);
      }
    }
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out + "]";
}

std::vector<int> int_list(const ConfigValue& v, const std::string& key) {
  std::vector<int> out;
  for (const auto& item : v.as_array(key)) out.push_back(static_cast<int>(item.as_int(key)));
  return out;
}

std::array<double, 3> triple(const ConfigValue& v, const std::string& key) {
  const auto& items = v.as_array(key);
  if (items.size() != 3) throw ConfigurationError(key + ": expected 3 values");
  return {items[0].as_double(key), items[1].as_double(key), items[2].as_double(key)};
}

using Setter = std::function<void(TrainConfig&, const ConfigValue&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&](const std::string& k, auto member) {
      t[k] = [member](TrainConfig& c, const ConfigValue& v, const std::string& key) {
        member(c) = v.as_double(key);
      };
    };
    auto integer = [&](const std::string& k, auto member) {
      t[k] = [member](TrainConfig& c, const ConfigValue& v, const std::string& key) {
        member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(v.as_int(key));
      };
    };
    auto boolean = [&](const std::string& k, auto member) {
      t[k] = [member](TrainConfig& c, const ConfigValue& v, const std::string& key) {
        member(c) = v.as_bool(key);
      };
    };
    auto string = [&](const std::string& k, auto member) {
      t[k] = [member](TrainConfig& c, const ConfigValue& v, const std::string& key) {
        member(c) = v.as_string(key);
      };
    };
    num("base_lr", [](TrainConfig& c) -> double& { return c.base_lr; });
    num("momentum", [](TrainConfig& c) -> double& { return c.momentum; });
    num("weight_decay", [](TrainConfig& c) -> double& { return c.weight_decay; });
    num("power", [](TrainConfig& c) -> double& { return c.power; });
    integer("max_iter", [](TrainConfig& c) -> std::int64_t& { return c.max_iter; });
    integer("batch_size", [](TrainConfig& c) -> int& { return c.batch_size; });
    integer("crop_size", [](TrainConfig& c) -> int& { return c.crop_size; });
    t["pairing"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.pairing = parse_pairing(v.as_string(key));
    };
    t["decouple"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.decouple = parse_decouple(v.as_string(key));
    };
    t["decouple_space"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.decouple_space = parse_decouple_space(v.as_string(key));
    };
    boolean("use_mitrans", [](TrainConfig& c) -> bool& { return c.use_mitrans; });
    integer("warmup_iters", [](TrainConfig& c) -> std::int64_t& { return c.warmup_iters; });
    boolean("use_l_dec", [](TrainConfig& c) -> bool& { return c.use_l_dec; });
    boolean("use_l_cla", [](TrainConfig& c) -> bool& { return c.use_l_cla; });
    boolean("mixed_grad", [](TrainConfig& c) -> bool& { return c.mixed_grad; });
    t["seed"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      // Seeds use the full unsigned 64-bit range.
      std::uint64_t u = 0;
      const char* end = v.text.data() + v.text.size();
      if (v.kind == ConfigValue::Kind::kFloat && std::from_chars(v.text.data(), end, u).ptr == end) {
        c.seed = u;
        return;
      }
      const std::int64_t s = v.as_int(key);
      if (s < 0) throw ConfigurationError(key + ": must be >= 0");
      c.seed = static_cast<std::uint64_t>(s);
    };

    num("lambda.alpha", [](TrainConfig& c) -> double& { return c.lambda.alpha; });
    num("lambda.clamp_max", [](TrainConfig& c) -> double& { return c.lambda.clamp_max; });
    num("ramp.w_max", [](TrainConfig& c) -> double& { return c.ramp.w_max; });
    num("ramp.ramp_fraction", [](TrainConfig& c) -> double& { return c.ramp.ramp_fraction; });

    string("data.root", [](TrainConfig& c) -> std::string& { return c.data.root; });
    t["data.layout"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.data.layout = parse_layout(v.as_string(key));
    };
    num("data.labeled_ratio", [](TrainConfig& c) -> double& { return c.data.labeled_ratio; });
    string("data.labeled_list", [](TrainConfig& c) -> std::string& { return c.data.labeled_list; });
    t["data.split_seed"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      const std::int64_t s = v.as_int(key);
      if (s < 0) throw ConfigurationError(key + ": must be >= 0");
      c.data.split_seed = static_cast<std::uint64_t>(s);
    };
    integer("data.max_val", [](TrainConfig& c) -> int& { return c.data.max_val; });

    string("model.arch", [](TrainConfig& c) -> std::string& { return c.model.arch; });
    integer("model.stem_channels", [](TrainConfig& c) -> int& { return c.model.stem_channels; });
    t["model.stage_channels"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.model.stage_channels = int_list(v, key);
    };
    integer("model.blocks_per_stage", [](TrainConfig& c) -> int& { return c.model.blocks_per_stage; });
    integer("model.psp_channels", [](TrainConfig& c) -> int& { return c.model.psp_channels; });
    integer("model.decoder_channels", [](TrainConfig& c) -> int& { return c.model.decoder_channels; });
    integer("model.mitrans_count", [](TrainConfig& c) -> int& { return c.model.mitrans_count; });
    string("model.pretrained", [](TrainConfig& c) -> std::string& { return c.model.pretrained; });

    num("augment.scale_min", [](TrainConfig& c) -> double& { return c.augment.scale_min; });
    num("augment.scale_max", [](TrainConfig& c) -> double& { return c.augment.scale_max; });
    num("augment.hflip_prob", [](TrainConfig& c) -> double& { return c.augment.hflip_prob; });
    num("augment.rotation_deg", [](TrainConfig& c) -> double& { return c.augment.rotation_deg; });
    num("augment.rotation_prob", [](TrainConfig& c) -> double& { return c.augment.rotation_prob; });
    boolean("augment.enable_scale", [](TrainConfig& c) -> bool& { return c.augment.enable_scale; });
    boolean("augment.enable_hflip", [](TrainConfig& c) -> bool& { return c.augment.enable_hflip; });
    boolean("augment.enable_rotation", [](TrainConfig& c) -> bool& { return c.augment.enable_rotation; });
    t["augment.fill"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.augment.fill = triple(v, key);
    };
    t["normalize.mean"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.normalize.mean = triple(v, key);
    };
    t["normalize.std"] = [](TrainConfig& c, const ConfigValue& v, const std::string& key) {
      c.normalize.stddev = triple(v, key);
    };

    integer("output.log_interval", [](TrainConfig& c) -> int& { return c.output.log_interval; });
    integer("output.eval_interval", [](TrainConfig& c) -> int& { return c.output.eval_interval; });
    boolean("output.checkpoints", [](TrainConfig& c) -> bool& { return c.output.checkpoints; });
    return t;
  }();
  return table;
}

}  // namespace

double ConfigValue::as_double(const std::string& key) const {
  if (kind == Kind::kInt) return static_cast<double>(integer);
  if (kind == Kind::kFloat) return number;
  type_error(key, "number", kind);
}

std::int64_t ConfigValue::as_int(const std::string& key) const {
  if (kind == Kind::kInt) return integer;
  if (kind == Kind::kFloat && std::isfinite(number) && std::floor(number) == number &&
      std::fabs(number) < 9.0e15) {
    return static_cast<std::int64_t>(number);
  }
  type_error(key, "integer", kind);
}

bool ConfigValue::as_bool(const std::string& key) const {
  if (kind != Kind::kBool) type_error(key, "boolean", kind);
  return boolean;
}

const std::string& ConfigValue::as_string(const std::string& key) const {
  if (kind != Kind::kString) type_error(key, "string", kind);
  return text;
}

const std::vector<ConfigValue>& ConfigValue::as_array(const std::string& key) const {
  if (kind != Kind::kArray) type_error(key, "array", kind);
  return items;
}

std::vector<ConfigEntry> parse_document(const std::string& text) {
  std::vector<ConfigEntry> entries;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    LineParser p(raw, line);
    if (p.at_end_or_comment()) continue;
    std::size_t first = raw.find_first_not_of(" \t");
    if (raw[first] == '[') {
      section = p.section();
      continue;
    }
    ConfigEntry e;
    e.line = line;
    e.key = p.key();
    if (!section.empty()) e.key = section + "." + e.key;
    p.expect('=');
    e.value = p.value();
    if (!p.at_end_or_comment()) p.fail("trailing characters after value");
    if (!seen.insert(e.key).second) p.fail("duplicate key '" + e.key + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void apply_config_entry(TrainConfig& config, const ConfigEntry& entry) {
  const auto& table = setters();
  auto it = table.find(entry.key);
  if (it == table.end()) {
    throw ConfigurationError("unknown key '" + entry.key + "' (line " + std::to_string(entry.line) + ")");
  }
  try {
    it->second(config, entry.value, entry.key);
  } catch (const ConfigurationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigurationError(entry.key + ": " + e.what());
  }
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig config;
  for (const auto& entry : parse_document(text)) apply_config_entry(config, entry);
  config.validate();
  return config;
}

TrainConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

std::string echo_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "base_lr = " << fmt_double(c.base_lr) << "\n"
    << "momentum = " << fmt_double(c.momentum) << "\n"
    << "weight_decay = " << fmt_double(c.weight_decay) << "\n"
    << "power = " << fmt_double(c.power) << "\n"
    << "max_iter = " << c.max_iter << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "crop_size = " << c.crop_size << "\n"
    << "pairing = " << quote(pairing_name(c.pairing)) << "\n"
    << "decouple = " << quote(decouple_name(c.decouple)) << "\n"
    << "decouple_space = " << quote(decouple_space_name(c.decouple_space)) << "\n"
    << "use_mitrans = " << fmt_bool(c.use_mitrans) << "\n"
    << "warmup_iters = " << c.warmup_iters << "  # resolved: " << c.resolved_warmup() << "\n"
    << "use_l_dec = " << fmt_bool(c.use_l_dec) << "\n"
    << "use_l_cla = " << fmt_bool(c.use_l_cla) << "\n"
    << "mixed_grad = " << fmt_bool(c.mixed_grad) << "\n"
    << "seed = " << c.seed << "\n"
    << "\n[lambda]\n"
    << "alpha = " << fmt_double(c.lambda.alpha) << "\n"
    << "clamp_max = " << fmt_double(c.lambda.clamp_max) << "\n"
    << "\n[ramp]\n"
    << "w_max = " << fmt_double(c.ramp.w_max) << "\n"
    << "ramp_fraction = " << fmt_double(c.ramp.ramp_fraction) << "\n"
    << "\n[data]\n"
    << "root = " << quote(c.data.root) << "\n"
    << "layout = " << quote(layout_name(c.data.layout)) << "\n"
    << "labeled_ratio = " << fmt_double(c.data.labeled_ratio) << "\n"
    << "labeled_list = " << quote(c.data.labeled_list) << "\n"
    << "split_seed = " << c.data.split_seed << "\n"
    << "max_val = " << c.data.max_val << "\n"
    << "\n[model]\n"
    << "arch = " << quote(c.model.arch) << "\n"
    << "stem_channels = " << c.model.stem_channels << "\n"
    << "stage_channels = " << fmt_list(c.model.stage_channels) << "\n"
    << "blocks_per_stage = " << c.model.blocks_per_stage << "\n"
    << "psp_channels = " << c.model.psp_channels << "\n"
    << "decoder_channels = " << c.model.decoder_channels << "\n"
    << "mitrans_count = " << c.model.mitrans_count << "\n"
    << "pretrained = " << quote(c.model.pretrained) << "\n"
    << "\n[augment]\n"
    << "scale_min = " << fmt_double(c.augment.scale_min) << "\n"
    << "scale_max = " << fmt_double(c.augment.scale_max) << "\n"
    << "hflip_prob = " << fmt_double(c.augment.hflip_prob) << "\n"
    << "rotation_deg = " << fmt_double(c.augment.rotation_deg) << "\n"
    << "rotation_prob = " << fmt_double(c.augment.rotation_prob) << "\n"
    << "enable_scale = " << fmt_bool(c.augment.enable_scale) << "\n"
    << "enable_hflip = " << fmt_bool(c.augment.enable_hflip) << "\n"
    << "enable_rotation = " << fmt_bool(c.augment.enable_rotation) << "\n"
    << "fill = " << fmt_list(std::vector<double>(c.augment.fill.begin(), c.augment.fill.end())) << "\n"
    << "\n[normalize]\n"
    << "mean = " << fmt_list(std::vector<double>(c.normalize.mean.begin(), c.normalize.mean.end())) << "\n"
    << "std = " << fmt_list(std::vector<double>(c.normalize.stddev.begin(), c.normalize.stddev.end())) << "\n"
    << "\n[output]\n"
    << "log_interval = " << c.output.log_interval << "\n"
    << "eval_interval = " << c.output.eval_interval << "  # resolved: " << c.resolved_eval_interval()
    << "\n"
    << "checkpoints = " << fmt_bool(c.output.checkpoints) << "\n";
  return o.str();
}

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : echo_config(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace guidedmix
