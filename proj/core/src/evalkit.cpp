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

#include "guidedmix/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <spdlog/spdlog.h>

#include "guidedmix/config.hpp"
#include "guidedmix/error.hpp"
#include "guidedmix/pairing.hpp"

namespace guidedmix {
namespace fs = std::filesystem;

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(std::max(num_classes, 0)) * std::max(num_classes, 0), 0) {
  if (num_classes < 0) throw ValidationError("confusion matrix needs a class count >= 0");
}

std::int64_t& ConfusionMatrix::at(int truth, int predicted) {
  return counts_[static_cast<std::size_t>(truth) * num_classes_ + predicted];
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth) * num_classes_ + predicted];
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ValidationError("confusion matrix size mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t g = 0; g < rows.size(); ++g) {
    if (rows[g].size() != rows.size()) throw ValidationError("confusion matrix must be square");
    for (std::size_t p = 0; p < rows.size(); ++p) {
      if (rows[g][p] < 0) throw ValidationError("confusion counts must be >= 0");
      cm.at(static_cast<int>(g), static_cast<int>(p)) = rows[g][p];
    }
  }
  return cm;
}

void confusion_accumulate(ConfusionMatrix& cm, const LabelMask& pred, const LabelMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ValidationError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                          " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  const int c = cm.num_classes();
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    const int g = gt.classes[i];
    if (g == kIgnoreLabel) continue;
    const int p = pred.classes[i];
    if (g >= c || p >= c) {
      throw ValidationError("class id " + std::to_string(std::max(g, p)) + " outside confusion matrix of " +
                            std::to_string(c));
    }
    ++cm.at(g, p);
  }
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  const int c = cm.num_classes();
  std::vector<std::optional<double>> out(c);
  for (int k = 0; k < c; ++k) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::int64_t inter = cm.at(k, k);
    const std::int64_t uni = row + col - inter;
    if (uni > 0) out[k] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class_iou(cm)) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) {
    spdlog::warn("miou: empty confusion matrix, reporting 0");
    return 0.0;
  }
  return sum / n;
}

LabelMask predict_mask(const SegmentationModel& model, const ImageSample& image, bool use_mitrans,
                       const Normalization& norm) {
  NoGradGuard no_grad;
  const Tensor input = pad_to_multiple(make_input_batch(std::span<const ImageSample>(&image, 1), norm),
                                       SegmentationModel::kOutputStride);
  const Tensor logits = crop_top_left(model.forward(input, use_mitrans).logits.value(),
                                      image.height(), image.width());
  const int c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelMask out(h, w, c, 0);
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    for (int k = 1; k < c; ++k) {
      if (logits[k * plane + p] > logits[best * plane + p]) best = k;
    }
    out.classes[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

MetricsRecord evaluate(const Predictor& predictor, const DatasetSplit& val) {
  if (val.labeled.empty()) throw ConfigurationError("evaluation needs a non-empty labeled val split");
  MetricsRecord rec;
  rec.confusion = ConfusionMatrix(val.class_count);
  for (const auto& s : val.labeled) {
    confusion_accumulate(rec.confusion, predictor(s.image), s.mask);
    ++rec.images;
  }
  rec.class_iou = per_class_iou(rec.confusion);
  rec.miou = miou(rec.confusion);
  return rec;
}

MetricsRecord evaluate(const SegmentationModel& model, const DatasetSplit& val, bool use_mitrans,
                       const Normalization& norm) {
  return evaluate([&](const ImageSample& img) { return predict_mask(model, img, use_mitrans, norm); }, val);
}

void AblationGrid::validate() const {
  if (pairing.empty() || mitrans.empty() || decouple.empty() || lambda_clamp.empty() || seeds.empty()) {
    throw ConfigurationError("ablation grid axes must all be non-empty");
  }
  for (double c : lambda_clamp) {
    if (!(c > 0.0 && c <= 0.5)) throw ConfigurationError("lambda_clamp values must lie in (0, 0.5]");
  }
}

std::vector<AblationCell> expand_grid(const AblationGrid& grid, const TrainConfig& base) {
  grid.validate();
  std::vector<AblationCell> cells;
  if (grid.include_suponly) {
    for (bool mt : grid.mitrans) {
      for (auto seed : grid.seeds) {
        AblationCell cell;
        cell.pairing = "suponly";
        cell.mitrans = mt;
        cell.decouple = "none";
        cell.lambda_clamp = base.lambda.clamp_max;
        cell.seed = seed;
        cell.config = base;
        cell.config.use_mitrans = mt;
        cell.config.seed = seed;
        cell.config.ramp.w_max = 0.0;
        cells.push_back(std::move(cell));
      }
    }
  }
  for (auto pairing : grid.pairing) {
    for (bool mt : grid.mitrans) {
      for (auto mode : grid.decouple) {
        for (double clamp : grid.lambda_clamp) {
          for (auto seed : grid.seeds) {
            AblationCell cell;
            cell.pairing = pairing_name(pairing);
            cell.mitrans = mt;
            cell.decouple = decouple_name(mode);
            cell.lambda_clamp = clamp;
            cell.seed = seed;
            cell.config = base;
            cell.config.pairing = pairing;
            cell.config.use_mitrans = mt;
            cell.config.decouple = mode;
            cell.config.lambda.clamp_max = clamp;
            cell.config.seed = seed;
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

AblationGrid parse_grid(const std::string& text, const fs::path& grid_dir, TrainConfig* base) {
  AblationGrid grid;
  std::vector<ConfigEntry> overrides;
  std::string base_path;
  auto items = [](const ConfigValue& v) {
    return v.kind == ConfigValue::Kind::kArray ? v.items : std::vector<ConfigValue>{v};
  };
  for (const auto& e : parse_document(text)) {
    if (e.key.rfind("base.", 0) == 0) {
      ConfigEntry o = e;
      o.key = e.key.substr(5);
      overrides.push_back(std::move(o));
    } else if (e.key == "base_config") {
      base_path = e.value.as_string(e.key);
    } else if (e.key == "pairing") {
      grid.pairing.clear();
      for (const auto& v : items(e.value)) grid.pairing.push_back(parse_pairing(v.as_string(e.key)));
    } else if (e.key == "mitrans") {
      grid.mitrans.clear();
      for (const auto& v : items(e.value)) grid.mitrans.push_back(v.as_bool(e.key));
    } else if (e.key == "decouple") {
      grid.decouple.clear();
      for (const auto& v : items(e.value)) grid.decouple.push_back(parse_decouple(v.as_string(e.key)));
    } else if (e.key == "lambda_clamp") {
      grid.lambda_clamp.clear();
      for (const auto& v : items(e.value)) grid.lambda_clamp.push_back(v.as_double(e.key));
    } else if (e.key == "seeds") {
      grid.seeds.clear();
      for (const auto& v : items(e.value)) {
        const auto s = v.as_int(e.key);
        if (s < 0) throw ConfigurationError("seeds: must be >= 0");
        grid.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    } else if (e.key == "include_suponly") {
      grid.include_suponly = e.value.as_bool(e.key);
    } else {
      throw ConfigurationError("unknown grid key '" + e.key + "' (line " + std::to_string(e.line) + ")");
    }
  }
  if (base) {
    TrainConfig cfg;
    if (!base_path.empty()) {
      fs::path p = base_path;
      if (p.is_relative()) p = grid_dir / p;
      cfg = parse_config(p);
    }
    for (const auto& o : overrides) apply_config_entry(cfg, o);
    cfg.validate();
    *base = cfg;
  }
  grid.validate();
  return grid;
}

std::string AblationTable::to_csv() const {
  std::ostringstream o;
  o << "pairing,mitrans,decouple,lambda_clamp,seed,miou\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.6g", c.lambda_clamp);
    o << c.pairing << "," << (c.mitrans ? "on" : "off") << "," << c.decouple << "," << buf << "," << c.seed << ",";
    if (c.miou) {
      std::snprintf(buf, sizeof buf, "%.6f", *c.miou);
      o << buf;
    }
    o << "\n";
  }
  return o.str();
}

std::string AblationTable::to_markdown() const {
  using Key = std::tuple<std::string, bool, std::string, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  std::map<Key, int> failures;
  for (const auto& c : cells) {
    const Key k{c.pairing, c.mitrans, c.decouple, c.lambda_clamp};
    if (!values.count(k) && !failures.count(k)) order.push_back(k);
    if (c.miou) {
      values[k].push_back(*c.miou);
    } else {
      ++failures[k];
      values[k];
    }
  }
  std::ostringstream o;
  o << "| Pairing | MITrans | Decoupling | lambda < | mIoU (%) | seeds | failed |\n"
    << "|---|---|---|---|---|---|---|\n";
  char buf[128];
  for (const auto& k : order) {
    const auto& v = values[k];
    std::string cell = "n/a";
    if (!v.empty()) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
      std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mean, 100.0 * sd);
      cell = buf;
    }
    std::snprintf(buf, sizeof buf, "%.2g", std::get<3>(k));
    o << "| " << std::get<0>(k) << " | " << (std::get<1>(k) ? "on" : "off") << " | " << std::get<2>(k)
      << " | " << buf << " | " << cell << " | " << v.size() << " | " << failures[k] << " |\n";
  }
  return o.str();
}

AblationTable run_ablation(const AblationGrid& grid, const TrainConfig& base, CellRunner runner,
                           const std::function<void(const AblationCell&)>& on_cell) {
  if (!runner) {
    runner = [](const AblationCell& cell) { return train(cell.config).final_miou; };
  }
  AblationTable table;
  table.cells = expand_grid(grid, base);
  for (auto& cell : table.cells) {
    try {
      cell.miou = runner(cell);
    } catch (const std::exception& e) {
      cell.error = e.what();
      spdlog::error("ablation cell {}/{}/{}/{}/seed {} failed: {}", cell.pairing, cell.mitrans ? "on" : "off",
                    cell.decouple, cell.lambda_clamp, cell.seed, e.what());
    }
    if (on_cell) on_cell(cell);
  }
  return table;
}

std::string ActivationProfile::to_csv() const {
  std::ostringstream o;
  o << "layer,unlabeled,mixed\n";
  char buf[96];
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g\n", unlabeled[i], mixed[i]);
    o << layers[i] << buf;
  }
  return o.str();
}

std::string ActivationProfile::to_svg() const {
  const double width = 720, height = 360, margin = 40;
  double lo = 0.0, hi = 0.0;
  for (double v : unlabeled) hi = std::max(hi, v), lo = std::min(lo, v);
  for (double v : mixed) hi = std::max(hi, v), lo = std::min(lo, v);
  if (hi <= lo) hi = lo + 1.0;
  const std::size_t n = layers.size();
  auto px = [&](std::size_t i) { return margin + (n > 1 ? i * (width - 2 * margin) / (n - 1) : 0.0); };
  auto py = [&](double v) { return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin); };
  auto line = [&](const std::vector<double>& s, const char* colour) {
    std::ostringstream o;
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.size(); ++i) o << px(i) << "," << py(s[i]) << " ";
    o << "\"/>\n";
    return o.str();
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
    << height - margin << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
    << "\" stroke=\"black\"/>\n"
    << line(unlabeled, "#1f77b4") << line(mixed, "#d62728")
    << "<text x=\"" << width - 200 << "\" y=\"20\" fill=\"#1f77b4\">unlabeled</text>\n"
    << "<text x=\"" << width - 100 << "\" y=\"20\" fill=\"#d62728\">mixed</text>\n"
    << "<text x=\"" << margin << "\" y=\"" << height - 10 << "\">conv layer (forward order)</text>\n"
    << "</svg>\n";
  return o.str();
}

ActivationProfile mean_activation_profile(const SegmentationModel& model, const ImageSample& unlabeled,
                                          const ImageSample& mixed, bool use_mitrans,
                                          const Normalization& norm) {
  NoGradGuard no_grad;
  auto run = [&](const ImageSample& img) {
    ActivationProbe probe;
    const Tensor input = pad_to_multiple(make_input_batch(std::span<const ImageSample>(&img, 1), norm),
                                         SegmentationModel::kOutputStride);
    model.forward(input, use_mitrans, &probe);
    return probe.means;
  };
  const auto a = run(unlabeled);
  const auto b = run(mixed);
  ActivationProfile out;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    out.layers.push_back(a[i].first);
    out.unlabeled.push_back(a[i].second);
    out.mixed.push_back(b[i].second);
  }
  return out;
}

ExportReport export_predictions(const SegmentationModel& model, std::span<const ImageSample> images,
                                const fs::path& out_dir, const Palette& palette, bool use_mitrans,
                                const Normalization& norm) {
  ExportReport report;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& img : images) {
    std::string stem = img.id;
    std::replace(stem.begin(), stem.end(), '/', '_');
    const LabelMask mask = predict_mask(model, img, use_mitrans, norm);
    Raster ids;
    ids.height = mask.height;
    ids.width = mask.width;
    ids.channels = 1;
    ids.pixels = mask.classes;
    const fs::path id_path = out_dir / (stem + ".png");
    const fs::path colour_path = out_dir / (stem + "_color.png");
    try {
      write_png_gray(id_path, ids);
      report.written.push_back(id_path);
    } catch (const std::exception& e) {
      report.failures.push_back(id_path.string() + ": " + e.what());
    }
    try {
      write_png_indexed(colour_path, ids, palette);
      report.written.push_back(colour_path);
    } catch (const std::exception& e) {
      report.failures.push_back(colour_path.string() + ": " + e.what());
    }
  }
  return report;
}

}  // namespace guidedmix
