// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipeline shared by the command line tool and the acceptance
// runner. Everything written here goes through write_file_atomic.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cssm/io.hpp"

namespace cssm {

// Run artifacts, relative to the output directory.
inline constexpr const char* kLogFile = "train_log.csv";
inline constexpr const char* kReportFile = "report.txt";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kMapFile = "map.ppm";
inline constexpr const char* kLabelsFile = "labels.pgm";
inline constexpr const char* kSplitsFile = "splits.csv";

// Copies bands / classes from the dataset into the model section.
RunConfig bind_to_dataset(RunConfig cfg, const Dataset& data);

std::string format_train_log(const std::vector<StepStats>& log);
std::string format_splits(const SplitSpec& split);
// Config echo, metric table, and the nearest-mean reference OA. Contains no
// timing so identical runs give identical bytes.
std::string format_run_report(const RunConfig& cfg, const Metrics& model, const Metrics& baseline,
                              const std::vector<std::string>& class_names);

// Whole-image prediction as map.ppm (palette colors) and labels.pgm (ids).
void write_maps(const Trainer& trainer, const std::filesystem::path& out_dir);

struct RunResult {
  std::vector<StepStats> log;
  Metrics metrics;
  Metrics baseline;
};

// Fresh trainer on the seeded split, cfg.train.epochs steps, then all
// artifacts under out_dir.
RunResult train_and_write(const Dataset& data, const RunConfig& cfg, const std::filesystem::path& out_dir,
                          const std::function<void(const StepStats&)>& on_epoch = {});

}  // namespace cssm
