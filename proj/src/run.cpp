// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/run.hpp"

#include <cstdio>
#include <sstream>

namespace cssm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig bind_to_dataset(RunConfig cfg, const Dataset& data) {
  cfg.model.bands = data.cube.bands;
  cfg.model.num_classes = data.num_classes();
  cfg.model.validate();
  return cfg;
}

std::string format_train_log(const std::vector<StepStats>& log) {
  std::ostringstream os;
  os << "epoch,ce,cluster_loss,total,val_oa\n";
  for (const auto& s : log)
    os << s.epoch << ',' << fmt(s.ce) << ',' << fmt(s.cluster) << ',' << fmt(s.total) << ',' << fmt(s.val_oa) << '\n';
  return os.str();
}

std::string format_splits(const SplitSpec& split) {
  std::ostringstream os;
  os << "pixel,class,role\n";
  const std::pair<const char*, const std::vector<std::vector<std::size_t>>*> roles[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, lists] : roles)
    for (std::size_t c = 0; c < lists->size(); ++c)
      for (std::size_t p : (*lists)[c]) os << p << ',' << c + 1 << ',' << name << '\n';
  return os.str();
}

std::string format_run_report(const RunConfig& cfg, const Metrics& model, const Metrics& baseline,
                              const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "# configuration\n";
  // Without out_dir, so a rerun into another directory compares equal.
  std::istringstream echo(format_run_config(cfg));
  for (std::string line; std::getline(echo, line);)
    if (line.rfind("out_dir", 0) != 0) os << line << '\n';
  os << "\n# test metrics (x100)\n" << format_report(model, class_names);
  char line[96];
  std::snprintf(line, sizeof line, "\n# nearest class mean on the same split\nOA %.2f  AA %.2f  Kappa %.2f\n",
                100.0 * baseline.oa, 100.0 * baseline.aa, 100.0 * baseline.kappa);
  os << line;
  return os.str();
}

void write_maps(const Trainer& trainer, const std::filesystem::path& out_dir) {
  const auto pred = trainer.predict();
  const auto& cube = trainer.data().cube;
  write_file_atomic(out_dir / kMapFile, encode_ppm(pred, cube.height, cube.width, default_palette()));
  write_file_atomic(out_dir / kLabelsFile, encode_pgm(pred, cube.height, cube.width));
}

RunResult train_and_write(const Dataset& data, const RunConfig& cfg_in, const std::filesystem::path& out_dir,
                          const std::function<void(const StepStats&)>& on_epoch) {
  const RunConfig cfg = bind_to_dataset(cfg_in, data);
  SplitSpec split = make_splits(data.labels, data.num_classes(), cfg.train.seed);
  RunResult res;
  res.baseline = nearest_mean_baseline(data, split);
  Trainer trainer(data, std::move(split), cfg.model, cfg.train);
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    res.log.push_back(trainer.step());
    if (on_epoch) on_epoch(res.log.back());
  }
  res.metrics = trainer.evaluate();

  write_file_atomic(out_dir / kLogFile, format_train_log(res.log));
  write_file_atomic(out_dir / kSplitsFile, format_splits(trainer.split()));
  write_file_atomic(out_dir / kReportFile, format_run_report(cfg, res.metrics, res.baseline, data.class_names));
  save_checkpoint(out_dir / kCheckpointFile, trainer);
  write_maps(trainer, out_dir);
  return res;
}

}  // namespace cssm
