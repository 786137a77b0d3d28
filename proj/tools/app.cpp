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

#include "app.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "guidedmix/config.hpp"
#include "guidedmix/data.hpp"
#include "guidedmix/error.hpp"
#include "guidedmix/evalkit.hpp"
#include "guidedmix/mixing.hpp"
#include "guidedmix/training.hpp"

#ifndef GUIDEDMIX_VERSION
#define GUIDEDMIX_VERSION "0.0.0"
#endif

namespace guidedmix::app {
namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path run_root() {
  if (const char* env = std::getenv("GUIDEDMIX_RUN_DIR"); env && *env) return env;
  return "runs";
}

fs::path fresh_run_dir(const std::string& command) {
  const fs::path root = run_root();
  fs::create_directories(root);
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp;
  for (int k = 0;; ++k) {
    const fs::path dir = root / (k == 0 ? base : base + "-" + std::to_string(k));
    // create_directory reports false when the directory already exists.
    if (fs::create_directory(dir)) return dir;
  }
}

namespace {

struct Manifest {
  fs::path dir;
  json body;

  void write(const std::string& status) {
    body["status"] = status;
    write_text_file(dir / "manifest.json", body.dump(2) + "\n");
  }
};

Manifest start_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args) {
  Manifest m{dir, json::object()};
  m.body["command"] = command;
  m.body["args"] = args;
  m.body["version"] = GUIDEDMIX_VERSION;
  m.body["compiler"] = __VERSION__;
  m.write("running");
  return m;
}

DatasetSplit load_eval_split(const std::string& data, const std::string& layout, const std::string& split) {
  SplitKind kind = SplitKind::kVal;
  if (split == "train") {
    kind = SplitKind::kTrain;
  } else if (split != "val") {
    throw ConfigurationError("--split must be train or val");
  }
  return load_dataset(data, parse_layout(layout), kind, {});
}

struct ModelArgs {
  std::string checkpoint;
  std::string data;
  std::string layout;
  std::string split = "val";
};

void add_model_args(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->required();
  cmd->add_option("--data", a.data, "Dataset root (default: the training root)");
  cmd->add_option("--layout", a.layout, "voc | cityscapes | synthetic (default: as trained)");
  cmd->add_option("--split", a.split, "train | val");
}

struct LoadedModel {
  TrainConfig config;
  SegmentationModel model;
  DatasetSplit split;
};

LoadedModel load_model_and_data(const ModelArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  TrainConfig cfg;
  SegmentationModel model = model_from_checkpoint(ck, &cfg);
  const std::string root = a.data.empty() ? cfg.data.root : a.data;
  const std::string layout = a.layout.empty() ? layout_name(cfg.data.layout) : a.layout;
  DatasetSplit split = load_eval_split(root, layout, a.split);
  if (split.class_count != model.config().num_classes) {
    throw ConfigurationError("dataset has " + std::to_string(split.class_count) + " classes, checkpoint " +
                             std::to_string(model.config().num_classes));
  }
  return {std::move(cfg), std::move(model), std::move(split)};
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"GuidedMix semi-supervised segmentation toolkit", "guidedmix"};
  app.set_version_flag("--version", GUIDEDMIX_VERSION);
  app.require_subcommand(1);

  SyntheticOptions syn;
  std::string syn_out;
  auto* make = app.add_subcommand("make-synthetic", "Write a synthetic shapes dataset (VOC layout)");
  make->add_option("--out", syn_out, "Output directory")->required();
  make->add_option("--n-images", syn.n_images, "Training images")->check(CLI::PositiveNumber);
  make->add_option("--n-val", syn.n_val, "Validation images (-1: n/4)");
  make->add_option("--size", syn.image_size, "Image side in pixels")->check(CLI::PositiveNumber);
  make->add_option("--classes", syn.n_classes, "Class count incl. background")->check(CLI::Range(2, 4));
  make->add_option("--seed", syn.seed, "Generator seed");

  std::string train_config, train_data, resume;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::int64_t> train_iters;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", train_config, "Config file")->required();
  tr->add_option("--seed", train_seed, "Seed (overrides the config)");
  tr->add_option("--data", train_data, "Dataset root (overrides data.root)");
  tr->add_option("--max-iter", train_iters, "Iterations (overrides max_iter)");
  tr->add_option("--resume", resume, "Checkpoint directory to continue from");

  ModelArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_model_args(ev, eval_args);

  std::string grid_path;
  auto* ab = app.add_subcommand("ablate", "Train an ablation grid");
  ab->add_option("--grid", grid_path, "Grid file")->required();

  ModelArgs act_args;
  int act_labeled = 0, act_unlabeled = 1;
  double act_lambda = -1.0;
  auto* act = app.add_subcommand("inspect-activations", "Mean activation per conv layer, plain vs mixed input");
  add_model_args(act, act_args);
  act->add_option("--labeled-index", act_labeled, "Split image mixed in as the labeled partner");
  act->add_option("--unlabeled-index", act_unlabeled, "Split image used as the unlabeled input");
  act->add_option("--lambda", act_lambda, "Mixing weight of the labeled image (default: sampled)");

  ModelArgs exp_args;
  int exp_limit = -1;
  auto* ex = app.add_subcommand("export-preds", "Write class-id and colour PNGs for a split");
  add_model_args(ex, exp_args);
  ex->add_option("--limit", exp_limit, "Export at most this many images");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    std::cout << GUIDEDMIX_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  const fs::path dir = fresh_run_dir(name);
  Manifest manifest = start_manifest(dir, name, args);
  spdlog::info("run directory {}", dir.string());

  try {
    if (cmd == make) {
      generate_synthetic_dataset(syn, syn_out);
      manifest.body["seed"] = syn.seed;
      manifest.body["output"] = syn_out;
    } else if (cmd == tr) {
      TrainConfig cfg = parse_config(train_config);
      if (train_seed) cfg.seed = *train_seed;
      if (!train_data.empty()) cfg.data.root = train_data;
      if (train_iters) cfg.max_iter = *train_iters;
      cfg.validate();
      manifest.body["seed"] = cfg.seed;
      manifest.body["config_hash"] = config_hash(cfg);
      manifest.write("running");
      TrainOptions opts;
      opts.run_dir = dir;
      opts.resume_from = resume;
      opts.progress = true;
      const TrainResult r = train(cfg, opts);
      manifest.body["final_miou"] = r.final_miou;
      manifest.body["best_miou"] = r.best_miou;
      std::cout << "final val mIoU " << r.final_miou << " (best " << r.best_miou << " at iter " << r.best_iter
                << ")\n";
    } else if (cmd == ev) {
      LoadedModel lm = load_model_and_data(eval_args);
      manifest.body["seed"] = lm.config.seed;
      manifest.body["config_hash"] = config_hash(lm.config);
      const MetricsRecord rec = evaluate(lm.model, lm.split, lm.config.use_mitrans, lm.config.normalize);
      json out;
      out["miou"] = rec.miou;
      out["images"] = rec.images;
      json per = json::object();
      for (std::size_t c = 0; c < rec.class_iou.size(); ++c) {
        const std::string cname = c < lm.split.class_names.size() ? lm.split.class_names[c] : std::to_string(c);
        per[cname] = rec.class_iou[c] ? json(*rec.class_iou[c]) : json(nullptr);
      }
      out["class_iou"] = per;
      write_text_file(dir / "eval.json", out.dump(2) + "\n");
      std::cout << "mIoU " << rec.miou << " over " << rec.images << " images\n";
    } else if (cmd == ab) {
      TrainConfig base;
      const fs::path gp = grid_path;
      const AblationGrid grid = parse_grid(read_text_file(gp), gp.parent_path(), &base);
      manifest.body["config_hash"] = config_hash(base);
      manifest.write("running");
      const AblationTable table = run_ablation(grid, base, {}, [&](const AblationCell& c) {
        spdlog::info("cell {} mitrans={} {} clamp {} seed {}: {}", c.pairing, c.mitrans, c.decouple, c.lambda_clamp,
                     c.seed, c.miou ? std::to_string(*c.miou) : "failed: " + c.error);
      });
      write_text_file(dir / "ablation.csv", table.to_csv());
      write_text_file(dir / "ablation.md", table.to_markdown());
      std::cout << table.to_markdown();
    } else if (cmd == act) {
      LoadedModel lm = load_model_and_data(act_args);
      const int n = static_cast<int>(lm.split.labeled.size());
      if (act_labeled < 0 || act_labeled >= n || act_unlabeled < 0 || act_unlabeled >= n) {
        throw ConfigurationError("image index outside the split of " + std::to_string(n));
      }
      const ImageSample& xl = lm.split.labeled[act_labeled].image;
      const ImageSample& xu = lm.split.labeled[act_unlabeled].image;
      if (xl.pixels.shape() != xu.pixels.shape()) throw ValidationError("selected images differ in size");
      double lambda = act_lambda;
      if (lambda < 0.0) {
        Rng rng = Rng::keyed(lm.config.seed, Stream::kLambda, {0});
        lambda = sample_lambda(lm.config.lambda, rng);
      }
      const ImageSample mixed{xu.id + "_mix", mix_images(xl.pixels, xu.pixels, lambda)};
      const ActivationProfile prof =
          mean_activation_profile(lm.model, xu, mixed, lm.config.use_mitrans, lm.config.normalize);
      write_text_file(dir / "activations.csv", prof.to_csv());
      write_text_file(dir / "activations.svg", prof.to_svg());
      manifest.body["lambda"] = lambda;
      std::cout << prof.to_csv();
    } else if (cmd == ex) {
      LoadedModel lm = load_model_and_data(exp_args);
      std::vector<ImageSample> images;
      for (const auto& s : lm.split.labeled) {
        if (exp_limit >= 0 && static_cast<int>(images.size()) >= exp_limit) break;
        images.push_back(s.image);
      }
      const Palette palette = lm.config.data.layout == DatasetLayout::kCityscapes ? cityscapes_palette() : voc_palette();
      const ExportReport rep = export_predictions(lm.model, images, dir / "predictions", palette,
                                                  lm.config.use_mitrans, lm.config.normalize);
      for (const auto& f : rep.failures) std::cerr << "export failed: " << f << "\n";
      std::cout << rep.written.size() << " files written to " << (dir / "predictions").string() << "\n";
      if (!rep.failures.empty()) throw IoError(std::to_string(rep.failures.size()) + " files could not be written");
    }
  } catch (const std::exception& e) {
    manifest.body["error"] = e.what();
    manifest.write("failed");
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  manifest.write("ok");
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  try {
    return run(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace guidedmix::app
