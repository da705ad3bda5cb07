// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// cssm: command line front end.
//
//   cssm gen-synth   [--seed N] [--out-dir DIR] [--out FILE] [size flags]
//   cssm make-splits --config FILE [--seed N] [--out-dir DIR]
//   cssm train       --config FILE [--seed N] [--out-dir DIR] [arm flags]
//   cssm eval        --config FILE [--checkpoint FILE] [--seed N] [--out-dir DIR]
//   cssm predict-map --config FILE --checkpoint FILE [--out-dir DIR]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cssm/run.hpp"

namespace fs = std::filesystem;
using namespace cssm;

namespace {

struct Common {
  std::string config;
  std::string container;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--container", c.container, "HSIB container (overrides the config)");
  cmd->add_option("--out-dir", c.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "seed for splits and initialization (overrides the config)");
}

// Config file, then command line overrides. A relative container path in a
// config file is taken relative to that file.
RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg = load_run_config(c.config);
    if (!cfg.container.empty() && fs::path(cfg.container).is_relative())
      cfg.container = (fs::path(c.config).parent_path() / cfg.container).lexically_normal().string();
  }
  if (!c.container.empty()) cfg.container = c.container;
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  if (c.seed) cfg.train.seed = *c.seed;
  if (cfg.container.empty()) throw ConfigError("no container given (set it in --config or pass --container)");
  return cfg;
}

void print_progress(const StepStats& s, std::size_t epochs) {
  if (s.epoch % 10 != 0 && s.epoch != 1 && s.epoch != epochs) return;
  std::fprintf(stderr, "epoch %4zu/%zu  ce %.5f  cluster %.5f  total %.5f  val_oa %.2f\n", s.epoch, epochs, s.ce,
               s.cluster, s.total, 100.0 * s.val_oa);
}

int cmd_gen_synth(const SynthConfig& sc, const std::string& out) {
  const Dataset d = generate_synthetic(sc);
  save_container(out, d);
  Dataset norm = d;
  normalize_bands(norm.cube);
  const double oa = nearest_mean_baseline(norm, make_splits(norm.labels, norm.num_classes(), sc.seed)).oa;
  std::printf("wrote %s: %zux%zu, %zu bands, %zu classes; nearest-mean test OA %.2f\n", out.c_str(), sc.height,
              sc.width, sc.bands, sc.classes, 100.0 * oa);
  return 0;
}

int cmd_make_splits(const RunConfig& cfg) {
  const Dataset d = load_container(cfg.container);
  const SplitSpec s = make_splits(d.labels, d.num_classes(), cfg.train.seed);
  const fs::path out = fs::path(cfg.out_dir) / kSplitsFile;
  write_file_atomic(out, format_splits(s));
  std::printf("%-6s %-24s %6s %6s %6s\n", "No.", "Class", "train", "val", "test");
  for (std::size_t c = 0; c < d.num_classes(); ++c)
    std::printf("C%-5zu %-24s %6zu %6zu %6zu\n", c + 1, d.class_names[c].c_str(), s.train[c].size(), s.val[c].size(),
                s.test[c].size());
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_train(RunConfig cfg, std::optional<std::size_t> clusters, bool ce_only, bool no_attention, bool sweep,
              bool quiet) {
  if (clusters) cfg.model.clusters_per_class = *clusters;
  if (ce_only) {
    cfg.train.use_cluster_loss = false;
    cfg.train.cluster_weight = 0.0;
  }
  if (no_attention) cfg.model.use_attention = false;
  const Dataset d = load_container(cfg.container);
  const std::size_t epochs = cfg.train.epochs;
  auto progress = [&](const StepStats& s) {
    if (!quiet) print_progress(s, epochs);
  };

  if (!sweep) {
    const auto t0 = std::chrono::steady_clock::now();
    train_and_write(d, cfg, cfg.out_dir, progress);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << read_file(fs::path(cfg.out_dir) / kReportFile);
    std::printf("\ntrained %zu epochs in %.1f s; artifacts in %s\n", epochs, secs, cfg.out_dir.c_str());
    return 0;
  }

  std::string table = "clusters_per_class,oa,aa,kappa\n";
  for (std::size_t k = 1; k <= 5; ++k) {
    RunConfig arm = cfg;
    arm.model.clusters_per_class = k;
    const fs::path dir = fs::path(cfg.out_dir) / ("clusters_" + std::to_string(k));
    if (!quiet) std::fprintf(stderr, "-- clusters per class %zu\n", k);
    const RunResult r = train_and_write(d, arm, dir, progress);
    char row[96];
    std::snprintf(row, sizeof row, "%zu,%.4f,%.4f,%.4f\n", k, 100.0 * r.metrics.oa, 100.0 * r.metrics.aa,
                  100.0 * r.metrics.kappa);
    table += row;
  }
  const fs::path out = fs::path(cfg.out_dir) / "sweep.csv";
  write_file_atomic(out, table);
  std::cout << table << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg_in, const std::string& checkpoint) {
  const Dataset d = load_container(cfg_in.container);
  std::unique_ptr<Trainer> t;
  RunConfig cfg = bind_to_dataset(cfg_in, d);
  if (checkpoint.empty()) {
    // Untrained network with the configured seed.
    t = std::make_unique<Trainer>(d, make_splits(d.labels, d.num_classes(), cfg.train.seed), cfg.model, cfg.train);
  } else {
    t = load_checkpoint(checkpoint, d);
    cfg.model = t->model_config();
    cfg.train = t->train_config();
  }
  const Metrics m = t->evaluate();
  const std::string report = format_run_report(cfg, m, nearest_mean_baseline(d, t->split()), d.class_names);
  const fs::path out = fs::path(cfg.out_dir) / "eval_report.txt";
  write_file_atomic(out, report);
  std::cout << report << "\nwrote " << out.string() << "\n";
  return 0;
}

int cmd_predict_map(const RunConfig& cfg, const std::string& checkpoint) {
  const Dataset d = load_container(cfg.container);
  const auto t = load_checkpoint(checkpoint, d);
  write_maps(*t, cfg.out_dir);
  std::printf("wrote %s and %s in %s\n", kMapFile, kLabelsFile, cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cssm: cluster-guided spatial-spectral Mamba classifier for hyperspectral images"};
  app.require_subcommand(1);

  SynthConfig sc;
  std::string synth_out = "synthetic.hsib", synth_dir = ".";
  auto* gen = app.add_subcommand("gen-synth", "write the synthetic benchmark container");
  gen->add_option("--seed", sc.seed, "generator seed");
  gen->add_option("--out", synth_out, "container file name, relative to --out-dir")->capture_default_str();
  gen->add_option("--out-dir", synth_dir, "output directory")->capture_default_str();
  gen->add_option("--height", sc.height)->capture_default_str();
  gen->add_option("--width", sc.width)->capture_default_str();
  gen->add_option("--bands", sc.bands)->capture_default_str();
  gen->add_option("--classes", sc.classes)->capture_default_str();
  gen->add_option("--block", sc.block, "class tile side")->capture_default_str();
  gen->add_option("--noise", sc.noise, "additive noise sigma")->capture_default_str();
  gen->add_option("--gain", sc.gain, "illumination gain half-range")->capture_default_str();

  Common splits_opts, train_opts, eval_opts, map_opts;
  auto* splits = app.add_subcommand("make-splits", "write the seeded train/val/test split");
  add_common(splits, splits_opts);

  auto* train = app.add_subcommand("train", "train and write log, report, checkpoint and maps");
  add_common(train, train_opts);
  std::optional<std::size_t> clusters, epochs;
  bool ce_only = false, no_attention = false, sweep = false, quiet = false;
  train->add_option("--clusters-per-class", clusters, "override clusters per class");
  train->add_option("--epochs", epochs, "override the epoch count");
  train->add_flag("--ce-only", ce_only, "cross-entropy only, no cluster loss");
  train->add_flag("--no-attention", no_attention, "raster order inside each cluster");
  train->add_flag("--sweep-clusters", sweep, "one run per clusters-per-class in 1..5");
  train->add_flag("--quiet", quiet, "no per-epoch progress");

  std::string eval_ckpt, map_ckpt;
  auto* eval = app.add_subcommand("eval", "test-split metrics of a checkpoint (or of the untrained model)");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt)->check(CLI::ExistingFile);

  auto* pmap = app.add_subcommand("predict-map", "write map.ppm and labels.pgm from a checkpoint");
  add_common(pmap, map_opts);
  pmap->add_option("--checkpoint", map_ckpt)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_synth(sc, (fs::path(synth_dir) / synth_out).string());
    if (splits->parsed()) return cmd_make_splits(resolve(splits_opts));
    if (train->parsed()) {
      RunConfig cfg = resolve(train_opts);
      if (epochs) cfg.train.epochs = *epochs;
      return cmd_train(cfg, clusters, ce_only, no_attention, sweep, quiet);
    }
    if (eval->parsed()) return cmd_eval(resolve(eval_opts), eval_ckpt);
    if (pmap->parsed()) return cmd_predict_map(resolve(map_opts), map_ckpt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
