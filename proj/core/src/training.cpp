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

#include "guidedmix/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "guidedmix/config.hpp"
#include "guidedmix/error.hpp"
#include "guidedmix/evalkit.hpp"
#include "guidedmix/ops.hpp"
#include "guidedmix/pairing.hpp"

namespace guidedmix {
namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "arrays.bin is written little-endian");

ModelConfig ModelSpec::resolve(int num_classes) const {
  ModelConfig m = ModelConfig::preset(arch, num_classes);
  if (stem_channels > 0) m.stem_channels = stem_channels;
  if (!stage_channels.empty()) m.stage_channels = stage_channels;
  if (blocks_per_stage > 0) m.blocks_per_stage = blocks_per_stage;
  if (psp_channels > 0) m.psp_channels = psp_channels;
  if (decoder_channels > 0) m.decoder_channels = decoder_channels;
  m.mitrans_count = mitrans_count;
  m.validate();
  return m;
}

std::int64_t TrainConfig::resolved_warmup() const {
  return warmup_iters >= 0 ? warmup_iters : max_iter / 10;
}

int TrainConfig::resolved_eval_interval() const {
  if (output.eval_interval > 0) return output.eval_interval;
  return static_cast<int>(std::max<std::int64_t>(500, max_iter / 20));
}

AugmentPolicy TrainConfig::resolved_augment() const {
  AugmentPolicy p = augment;
  p.crop_size = crop_size;
  return p;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigurationError(msg);
  };
  need(base_lr > 0.0 && std::isfinite(base_lr), "base_lr must be a positive number");
  need(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  need(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be >= 0");
  need(power > 0.0 && std::isfinite(power), "power must be > 0");
  need(max_iter >= 1, "max_iter must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(crop_size >= 1, "crop_size must be >= 1");
  need(warmup_iters >= -1 && warmup_iters <= max_iter, "warmup_iters must be -1 or in [0, max_iter]");
  need(data.labeled_ratio > 0.0 && data.labeled_ratio <= 1.0, "data.labeled_ratio must lie in (0, 1]");
  need(data.max_val >= -1 && data.max_val != 0, "data.max_val must be -1 or >= 1");
  need(model.mitrans_count >= 0, "model.mitrans_count must be >= 0");
  need(!use_mitrans || model.mitrans_count >= 1, "model.mitrans_count must be >= 1 when use_mitrans is set");
  need(output.log_interval >= 1, "output.log_interval must be >= 1");
  need(output.eval_interval == -1 || output.eval_interval >= 1, "output.eval_interval must be -1 or >= 1");
  for (double s : normalize.stddev) need(s > 0.0, "normalize.std entries must be > 0");
  auto wrap = [](const std::string& prefix, auto&& fn) {
    try {
      fn();
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(prefix + ": " + e.what());
    }
  };
  wrap("lambda", [&] { lambda.validate(); });
  wrap("ramp", [&] { ramp.validate(); });
  wrap("augment", [&] { resolved_augment().validate(); });
  wrap("model", [&] { (void)model.resolve(2); });
}

Tensor pad_to_multiple(const Tensor& images, int multiple, double fill) {
  if (images.rank() != 4) throw ValidationError("pad_to_multiple expects [N, C, H, W]");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int hp = std::max(multiple, (h + multiple - 1) / multiple * multiple);
  const int wp = std::max(multiple, (w + multiple - 1) / multiple * multiple);
  if (hp == h && wp == w) return images;
  Tensor out({n, c, hp, wp}, fill);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        const double* src = images.data() + ((static_cast<std::size_t>(b) * c + ch) * h + y) * w;
        double* dst = out.data() + ((static_cast<std::size_t>(b) * c + ch) * hp + y) * wp;
        std::copy(src, src + w, dst);
      }
    }
  }
  return out;
}

LabelMask pad_mask(const LabelMask& mask, int height, int width) {
  if (height < mask.height || width < mask.width) throw ValidationError("pad_mask cannot shrink");
  LabelMask out(height, width, mask.num_classes, kIgnoreLabel);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, x);
  }
  return out;
}

Tensor crop_top_left(const Tensor& maps, int height, int width) {
  if (maps.rank() != 4 || height > maps.dim(2) || width > maps.dim(3)) {
    throw ValidationError("crop_top_left: bad window for " + shape_string(maps.shape()));
  }
  const int n = maps.dim(0), c = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  if (height == h && width == w) return maps;
  Tensor out({n, c, height, width});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < height; ++y) {
        const double* src = maps.data() + ((static_cast<std::size_t>(b) * c + ch) * h + y) * w;
        double* dst = out.data() + ((static_cast<std::size_t>(b) * c + ch) * height + y) * width;
        std::copy(src, src + width, dst);
      }
    }
  }
  return out;
}

double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power) {
  if (max_iter <= 0) throw ConfigurationError("poly_lr: max_iter must be > 0");
  if (iter > max_iter) {
    spdlog::warn("poly_lr: iteration {} past max_iter {}, learning rate clamped to 0", iter, max_iter);
    return 0.0;
  }
  if (iter < 0) iter = 0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base_lr * std::pow(frac, power);
}

OptimizerState make_optimizer_state(const SegmentationModel& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) s.momentum.emplace_back(p.var.shape());
  return s;
}

bool sgd_step(SegmentationModel& model, OptimizerState& state, double lr, double momentum,
              double weight_decay) {
  auto& params = model.parameters();
  if (state.momentum.size() != params.size()) {
    throw ValidationError("optimizer state does not match the model parameters");
  }
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads.push_back(params[i].var.grad());
    if (grads.back().shape() != state.momentum[i].shape()) {
      throw ValidationError("momentum buffer shape mismatch for " + params[i].name);
    }
    if (!grads.back().all_finite()) {
      spdlog::warn("sgd_step: non-finite gradient in {}, step skipped", params[i].name);
      return false;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].var.mutable_value();
    Tensor& buf = state.momentum[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + weight_decay * w[j];
      buf[j] = momentum * buf[j] + gj;
      w[j] -= lr * buf[j];
    }
  }
  return true;
}

namespace {

Var zero_scalar() { return Var(Tensor({1}, 0.0)); }

std::vector<FeatureVector> rows_as_features(const Tensor& pooled) {
  std::vector<FeatureVector> out;
  const int n = pooled.dim(0), d = pooled.dim(1);
  for (int i = 0; i < n; ++i) {
    FeatureVector f;
    f.values.assign(pooled.data() + static_cast<std::size_t>(i) * d,
                    pooled.data() + static_cast<std::size_t>(i + 1) * d);
    out.push_back(std::move(f));
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (int r : rows) parts.push_back(x.batch_slice(r, r + 1));
  return Tensor::stack(parts);
}

// Targets and predictions are compared as logits or as per-pixel class
// probabilities.
Var in_space(DecoupleSpace space, const Var& logits) {
  return space == DecoupleSpace::kLogits ? logits : ops::softmax_channels(logits);
}

Tensor in_space(DecoupleSpace space, const Tensor& logits) {
  return space == DecoupleSpace::kLogits ? logits : ops::softmax_channels(logits);
}

Tensor difference(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

// Decoupled map as a differentiable value: space(M_mix) - offset.
Var live_target(const SegmentationModel& model, const Tensor& mixed_input, const Tensor& offset,
                DecoupleSpace space, bool use_mitrans) {
  const Var m_mix = in_space(space, model.forward(mixed_input, use_mitrans).logits);
  return ops::add(m_mix, ops::scale(Var(offset), -1.0));
}

// Squared difference of two live maps, normalized like mse_map_loss.
Var mse_between(const Var& a, const Var& b) {
  return mse_map_loss(Tensor(a.shape()), ops::add(a, ops::scale(b, -1.0)));
}

Var assemble_objective(const SegmentationModel& model, bool use_mitrans, const StepPlan& plan,
                       const SegmentationModel::Output& labeled, const SegmentationModel::Output* unlabeled,
                       LossBundle* bundle) {
  std::vector<const LabelMask*> masks;
  for (const auto& m : plan.masks) masks.push_back(&m);
  Var l_ce = cross_entropy_loss(labeled.logits, masks);
  Var l_cla = plan.use_l_cla ? classifier_loss(labeled.class_logits, plan.presence) : zero_scalar();
  Var l_dec = zero_scalar();
  if (plan.dec_active) {
    const Var pred = in_space(plan.space, ops::gather_batch(labeled.logits, plan.labeled_partner));
    l_dec = plan.mixed_grad ? mse_between(live_target(model, plan.labeled_mixed_input, plan.labeled_offset,
                                                      plan.space, use_mitrans),
                                          pred)
                            : mse_map_loss(plan.labeled_target, pred);
  }
  Var l_usup = zero_scalar();
  if (plan.unsup_active) {
    if (!unlabeled) throw ValidationError("unsupervised term needs the unlabeled forward pass");
    const Var pred = in_space(plan.space, unlabeled->logits);
    l_usup = plan.mixed_grad
                 ? mse_between(live_target(model, plan.mixed_input, plan.mixed_offset, plan.space, use_mitrans), pred)
                 : mse_map_loss(plan.unlabeled_target, pred);
  }
  LossParts parts{l_ce.item(), l_dec.item(), l_cla.item(), l_usup.item()};
  LossBundle b = total_loss(parts, plan.omega);
  if (bundle) *bundle = b;
  return ops::weighted_sum({l_ce, l_dec, l_cla, l_usup}, {1.0, 1.0, 1.0, plan.omega});
}

}  // namespace

Var step_objective(const SegmentationModel& model, const StepPlan& plan, bool use_mitrans,
                   LossBundle* bundle) {
  const auto labeled = model.forward(plan.labeled_input, use_mitrans);
  if (plan.unsup_active) {
    const auto unlabeled = model.forward(plan.unlabeled_input, use_mitrans);
    return assemble_objective(model, use_mitrans, plan, labeled, &unlabeled, bundle);
  }
  return assemble_objective(model, use_mitrans, plan, labeled, nullptr, bundle);
}

std::string metrics_header() { return "iter,lr,l_ce,l_dec,l_cla,l_usup,omega,total,val_miou"; }

std::string format_metrics_row(const MetricsRow& row) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,",
                static_cast<long long>(row.iter), row.lr, row.loss.l_ce, row.loss.l_dec,
                row.loss.l_cla, row.loss.l_usup, row.loss.omega_usup, row.loss.total);
  std::string out = buf;
  if (row.val_miou) {
    std::snprintf(buf, sizeof buf, "%.10g", *row.val_miou);
    out += buf;
  }
  return out;
}

Trainer::Trainer(TrainConfig config, DatasetSplit train_split, std::optional<DatasetSplit> val_split)
    : config_(std::move(config)),
      train_(std::move(train_split)),
      val_(std::move(val_split)),
      model_(config_.model.resolve(train_.class_count), config_.seed),
      optimizer_(make_optimizer_state(model_)),
      stream_(train_, config_.batch_size, config_.resolved_augment(), config_.seed) {
  config_.validate();
  if (!config_.model.pretrained.empty()) {
    const auto skipped = model_.load_named_arrays(load_named_arrays(config_.model.pretrained));
    for (const auto& s : skipped) spdlog::warn("pretrained weights: skipped {}", s);
  }
}

StepPlan Trainer::base_plan(std::int64_t iteration, const PairedBatch& batch) const {
  StepPlan plan;
  const int m = SegmentationModel::kOutputStride;
  plan.labeled_input = pad_to_multiple(make_input_batch(batch.labeled, config_.normalize), m);
  const int h = plan.labeled_input.dim(2), w = plan.labeled_input.dim(3);
  for (const auto& s : batch.labeled) {
    plan.masks.push_back(pad_mask(s.mask, h, w));
    plan.presence.push_back(present_classes(s.mask));
  }
  plan.use_l_cla = config_.use_l_cla;
  plan.mixed_grad = config_.mixed_grad;
  plan.space = config_.decouple_space;
  const bool warmup = iteration < config_.resolved_warmup();
  if (warmup) return plan;
  plan.omega = unsup_weight(iteration, config_.max_iter, config_.ramp);
  plan.unsup_active = plan.omega > 0.0 && !batch.unlabeled.empty();
  plan.dec_active = config_.use_l_dec && batch.labeled.size() >= 2;
  if (plan.unsup_active) {
    plan.unlabeled_input = pad_to_multiple(make_input_batch(batch.unlabeled, config_.normalize), m);
  }
  return plan;
}

void Trainer::complete_targets(StepPlan& plan, const PairedBatch& batch, std::int64_t iteration,
                               const Tensor& labeled_logits, const Tensor& labeled_pooled,
                               const Tensor* unlabeled_pooled) const {
  NoGradGuard no_grad;
  const auto feats_l = rows_as_features(labeled_pooled);
  const Tensor m_l = in_space(plan.space, labeled_logits);
  if (plan.unsup_active) {
    if (config_.pairing == PairingStrategy::kSimilar) {
      plan.pairing = pair_similar(feats_l, rows_as_features(*unlabeled_pooled)).partner;
    } else {
      plan.pairing = batch.pairing;
    }
    MixedBatch mixed = mix_pairs(plan.labeled_input, plan.pairing, plan.unlabeled_input,
                                 config_.lambda, config_.seed, Stream::kLambda, iteration);
    const Tensor m_mix = in_space(plan.space, model_.forward(mixed.images, config_.use_mitrans).logits.value());
    std::vector<Tensor> targets;
    for (std::size_t i = 0; i < plan.pairing.size(); ++i) {
      const int l = plan.pairing[i];
      targets.push_back(decouple(config_.decouple, m_mix.batch_slice(i, i + 1),
                                 m_l.batch_slice(l, l + 1), mixed.lambdas[i]));
    }
    plan.unlabeled_target = Tensor::stack(targets);
    plan.lambdas = mixed.lambdas;
    if (plan.mixed_grad) {
      plan.mixed_input = mixed.images;
      plan.mixed_offset = difference(m_mix, plan.unlabeled_target);
    }
  }
  if (plan.dec_active) {
    Rng rng = Rng::keyed(config_.seed, Stream::kPairing, {static_cast<std::uint64_t>(iteration), 1});
    plan.labeled_partner = pair_within_labeled(feats_l, config_.pairing, rng);
    std::vector<int> self(plan.labeled_partner.size());
    for (std::size_t i = 0; i < self.size(); ++i) self[i] = static_cast<int>(i);
    MixedBatch mixed = mix_pairs(plan.labeled_input, self,
                                 gather_rows(plan.labeled_input, plan.labeled_partner),
                                 config_.lambda, config_.seed, Stream::kLabeledLambda, iteration);
    const Tensor m_mix = in_space(plan.space, model_.forward(mixed.images, config_.use_mitrans).logits.value());
    plan.labeled_target = decouple_labeled(m_mix, m_l);
    plan.labeled_lambdas = mixed.lambdas;
    if (plan.mixed_grad) {
      plan.labeled_mixed_input = mixed.images;
      plan.labeled_offset = difference(m_mix, plan.labeled_target);
    }
  }
}

StepPlan Trainer::plan_step(std::int64_t iteration, const PairedBatch& batch) const {
  NoGradGuard no_grad;
  StepPlan plan = base_plan(iteration, batch);
  const auto labeled = model_.forward(plan.labeled_input, config_.use_mitrans);
  std::optional<SegmentationModel::Output> unlabeled;
  if (plan.unsup_active) unlabeled = model_.forward(plan.unlabeled_input, config_.use_mitrans);
  complete_targets(plan, batch, iteration, labeled.logits.value(), labeled.pooled.value(),
                   unlabeled ? &unlabeled->pooled.value() : nullptr);
  return plan;
}

MetricsRow Trainer::step() {
  const std::int64_t it = optimizer_.iteration;
  const PairedBatch batch = stream_.batch_at(it);
  StepPlan plan = base_plan(it, batch);
  model_.zero_grad();
  const auto labeled = model_.forward(plan.labeled_input, config_.use_mitrans);
  std::optional<SegmentationModel::Output> unlabeled;
  if (plan.unsup_active) unlabeled = model_.forward(plan.unlabeled_input, config_.use_mitrans);
  complete_targets(plan, batch, it, labeled.logits.value(), labeled.pooled.value(),
                   unlabeled ? &unlabeled->pooled.value() : nullptr);
  MetricsRow row;
  row.iter = it;
  const Var total =
      assemble_objective(model_, config_.use_mitrans, plan, labeled, unlabeled ? &*unlabeled : nullptr, &row.loss);
  backward(total);
  row.lr = poly_lr(config_.base_lr, it, config_.max_iter, config_.power);
  sgd_step(model_, optimizer_, row.lr, config_.momentum, config_.weight_decay);
  ++optimizer_.iteration;
  return row;
}

double Trainer::evaluate_now() const {
  if (!val_ || val_->labeled.empty()) return 0.0;
  return evaluate(model_, *val_, config_.use_mitrans, config_.normalize).miou;
}

namespace {

std::optional<DatasetSplit> load_val(const TrainConfig& config) {
  try {
    DatasetSplit val = load_dataset(config.data.root, config.data.layout, SplitKind::kVal, {});
    if (config.data.max_val > 0 && static_cast<int>(val.labeled.size()) > config.data.max_val) {
      val.labeled.resize(config.data.max_val);
    }
    if (val.labeled.empty()) return std::nullopt;
    return val;
  } catch (const std::exception& e) {
    spdlog::warn("no validation split: {}", e.what());
    return std::nullopt;
  }
}

void write_diagnostic(const fs::path& run_dir, std::int64_t iteration, const std::string& what) {
  if (run_dir.empty()) return;
  json j;
  j["iteration"] = iteration;
  j["error"] = what;
  write_text_file(run_dir / "diagnostic.json", j.dump(2) + "\n");
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  LabeledSelection selection;
  selection.ratio = config.data.labeled_ratio;
  selection.id_list = config.data.labeled_list;
  selection.seed = config.data.split_seed;
  DatasetSplit train_split = load_dataset(config.data.root, config.data.layout, SplitKind::kTrain, selection);
  Trainer trainer(config, std::move(train_split), load_val(config));

  if (!options.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(options.resume_from);
    TrainConfig saved;
    SegmentationModel restored = model_from_checkpoint(ck, &saved, &trainer.optimizer());
    trainer.model() = std::move(restored);
    spdlog::info("resumed from {} at iteration {}", options.resume_from.string(), ck.iteration);
  }

  std::ofstream metrics;
  fs::path ck_root;
  if (!options.run_dir.empty()) {
    fs::create_directories(options.run_dir);
    write_text_file(options.run_dir / "config.toml", echo_config(config));
    metrics.open(options.run_dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (options.run_dir / "metrics.csv").string());
    metrics << metrics_header() << "\n";
    ck_root = options.run_dir / "checkpoints";
  }

  TrainResult result{trainer.model(), {}, 0.0, -1.0, -1};
  const int eval_every = config.resolved_eval_interval();
  const auto start = std::chrono::steady_clock::now();
  while (trainer.iteration() < config.max_iter) {
    MetricsRow row;
    try {
      row = trainer.step();
    } catch (const NumericError& e) {
      write_diagnostic(options.run_dir, trainer.iteration(), e.what());
      if (!ck_root.empty()) {
        save_checkpoint(ck_root / "diverged", config, trainer.model(), trainer.optimizer(), 0.0);
      }
      throw NumericError("training diverged at iteration " + std::to_string(trainer.iteration()) +
                         ": " + e.what());
    }
    const std::int64_t done = row.iter + 1;
    if (done % eval_every == 0 || done == config.max_iter) {
      const double miou = trainer.evaluate_now();
      row.val_miou = miou;
      result.final_miou = miou;
      const bool improved = miou > result.best_miou;
      if (improved) {
        result.best_miou = miou;
        result.best_iter = done;
      }
      if (!ck_root.empty() && config.output.checkpoints) {
        save_checkpoint(ck_root / "last", config, trainer.model(), trainer.optimizer(), miou);
        if (improved) save_checkpoint(ck_root / "best", config, trainer.model(), trainer.optimizer(), miou);
      }
      if (options.progress) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        spdlog::info("iter {}/{} loss {:.4f} val mIoU {:.4f} ({:.1f}s)", done, config.max_iter,
                     row.loss.total, miou, secs);
      }
    }
    if (metrics.is_open() && (row.iter % config.output.log_interval == 0 || row.val_miou)) {
      metrics << format_metrics_row(row) << "\n";
      metrics.flush();
    }
    if (options.on_step) options.on_step(row);
    result.history.push_back(row);
  }
  if (result.best_miou < 0.0) result.best_miou = 0.0;
  result.model = trainer.model();
  return result;
}

void save_named_arrays(const fs::path& dir, const std::vector<std::pair<std::string, Tensor>>& arrays,
                       const std::string& manifest_extra_json) {
  fs::create_directories(dir);
  json manifest = json::parse(manifest_extra_json);
  json index = json::array();
  std::ofstream bin(dir / "arrays.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + (dir / "arrays.bin").string());
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float64"}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    offset += t.size() * sizeof(double);
  }
  bin.close();
  if (!bin) throw IoError("write failed: " + (dir / "arrays.bin").string());
  manifest["arrays"] = index;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::pair<std::string, Tensor>> load_named_arrays(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("array archive not found: " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
  }
  std::ifstream bin(dir / "arrays.bin", std::ios::binary);
  if (!bin) throw IoError("cannot read " + (dir / "arrays.bin").string());
  bin.seekg(0, std::ios::end);
  const auto total = static_cast<std::uint64_t>(bin.tellg());
  std::vector<std::pair<std::string, Tensor>> out;
  try {
    for (const auto& entry : manifest.at("arrays")) {
      if (entry.at("dtype").get<std::string>() != "float64") {
        throw FormatError("unsupported dtype for " + entry.at("name").get<std::string>());
      }
      Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      Tensor t(shape);
      const std::uint64_t bytes = t.size() * sizeof(double);
      if (offset + bytes > total) throw FormatError("array data truncated in " + dir.string());
      bin.seekg(static_cast<std::streamoff>(offset));
      bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
      out.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
  }
  return out;
}

void save_checkpoint(const fs::path& dir, const TrainConfig& config, const SegmentationModel& model,
                     const OptimizerState& optimizer, double metric) {
  // Written next to the target and swapped in, so an interrupted save
  // leaves the previous checkpoint usable.
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  auto arrays = model.named_arrays();
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size() && i < optimizer.momentum.size(); ++i) {
    arrays.emplace_back("optimizer/momentum/" + params[i].name, optimizer.momentum[i]);
  }
  json extra;
  extra["format"] = "guidedmix-checkpoint";
  extra["version"] = 1;
  extra["config_hash"] = config_hash(config);
  extra["iteration"] = optimizer.iteration;
  extra["metric"] = metric;
  extra["num_classes"] = model.config().num_classes;
  save_named_arrays(tmp, arrays, extra.dump());
  write_text_file(tmp / "config.toml", echo_config(config));
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw IoError("checkpoint not found: " + dir.string());
  Checkpoint ck;
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
    ck.config_hash = manifest.at("config_hash").get<std::string>();
    ck.iteration = manifest.at("iteration").get<std::int64_t>();
    ck.metric = manifest.at("metric").get<double>();
    ck.num_classes = manifest.at("num_classes").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  ck.config_text = read_text_file(dir / "config.toml");
  ck.arrays = load_named_arrays(dir);
  return ck;
}

SegmentationModel model_from_checkpoint(const Checkpoint& checkpoint, TrainConfig* config,
                                        OptimizerState* optimizer) {
  TrainConfig cfg = parse_config_text(checkpoint.config_text);
  cfg.model.pretrained.clear();
  SegmentationModel model(cfg.model.resolve(checkpoint.num_classes), cfg.seed);
  const std::string prefix = "optimizer/momentum/";
  std::vector<std::pair<std::string, Tensor>> weights;
  std::vector<std::pair<std::string, Tensor>> buffers;
  for (const auto& a : checkpoint.arrays) {
    if (a.first.rfind(prefix, 0) == 0) {
      buffers.emplace_back(a.first.substr(prefix.size()), a.second);
    } else {
      weights.push_back(a);
    }
  }
  const auto skipped = model.load_named_arrays(weights);
  if (!skipped.empty()) throw FormatError("checkpoint does not match its model: " + skipped.front());
  if (weights.size() != model.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(weights.size()) + " of " +
                      std::to_string(model.parameters().size()) + " parameters");
  }
  if (optimizer) {
    *optimizer = make_optimizer_state(model);
    const auto& params = model.parameters();
    for (const auto& [name, t] : buffers) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == name && t.shape() == optimizer->momentum[i].shape()) {
          optimizer->momentum[i] = t;
        }
      }
    }
    optimizer->iteration = checkpoint.iteration;
  }
  if (config) *config = cfg;
  return model;
}

}  // namespace guidedmix
