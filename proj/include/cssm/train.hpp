// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cssm/cluster.hpp"
#include "cssm/data.hpp"
#include "cssm/model.hpp"

namespace cssm {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- splits ----------------------------------------------------------------

struct SplitRule {
  std::size_t train_per_class = 30;
  std::size_t val_per_class = 10;
  std::size_t small_class_threshold = 40;
};

struct SplitSpec {
  std::uint64_t seed = 0;
  SplitRule rule;
  // Indexed by class - 1; raster pixel indices, ascending.
  std::vector<std::vector<std::size_t>> train, val, test;

  std::vector<std::size_t> all(const std::vector<std::vector<std::size_t>>& role) const;
};

// Per class: >= threshold pixels -> fixed train/val counts, rest test.
// Smaller classes: half = ceil(n/2) goes to train+val, split 3:1 with
// train = floor(0.75 * half + 0.5); the other half is test. Throws
// DatasetError if a class has fewer than two labeled pixels.
SplitSpec make_splits(const LabelGrid& labels, std::size_t num_classes, std::uint64_t seed,
                      const SplitRule& rule = {});

// ---- metrics ---------------------------------------------------------------

struct Metrics {
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<std::optional<double>> per_class;      // recall; empty if no samples
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
};

Metrics metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion);

// labels / predictions are 1-based class ids in raster order.
Metrics evaluate_predictions(const LabelGrid& labels, std::span<const int> predictions,
                             std::span<const std::size_t> pixels, std::size_t num_classes);

// Table with one row per class followed by OA, AA and Kappa, all x100.
std::string format_report(const Metrics& m, const std::vector<std::string>& class_names);

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg);

  // Applies one update from the accumulated gradients and clears them.
  // Throws NumericError on a non-finite gradient, before touching anything.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const ParamList& params() const { return params_; }

  // Moment buffers, parallel to params().
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// ---- training --------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 200;
  double cluster_weight = 0.1;
  bool use_cluster_loss = true;
  double momentum = 0.9;
  double tau = 1.0;
  std::uint64_t seed = 0;
};

struct StepStats {
  std::size_t epoch = 0;
  double ce = 0.0;
  double cluster = 0.0;
  double total = 0.0;
  double val_oa = 0.0;
};

class Trainer {
 public:
  Trainer(const Dataset& data, SplitSpec split, const ModelConfig& model_cfg, const TrainConfig& train_cfg);

  // One whole-image step: routing forward, label-guided center update,
  // nearest assignment, full forward, CE + weighted cluster loss, update.
  StepStats step();

  // Per-pixel argmax class ids (1-based). Does not modify any state.
  std::vector<int> predict() const;
  Metrics evaluate() const;  // over the test split

  const ModelConfig& model_config() const { return model_cfg_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  const SplitSpec& split() const { return split_; }
  const Dataset& data() const { return *data_; }
  CssMamba& model() { return model_; }
  const CssMamba& model() const { return model_; }
  ClusterState& clusters() { return clusters_; }
  const ClusterState& clusters() const { return clusters_; }
  Adam& optimizer() { return adam_; }
  Rng& rng() { return rng_; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t e) { epoch_ = e; }

 private:
  // Routing map and prior from spatial features under the current centers.
  void route(std::span<const double> features, std::vector<int>& map, std::vector<double>& prior) const;

  const Dataset* data_;
  SplitSpec split_;
  ModelConfig model_cfg_;
  TrainConfig train_cfg_;
  Rng rng_;
  CssMamba model_;
  ClusterState clusters_;
  Adam adam_;
  ModelInput input_;
  std::vector<int> train_labels_;   // label on train pixels, 0 elsewhere
  std::vector<int> targets_;        // label - 1, -1 when unlabeled
  std::vector<char> train_mask_;
  std::size_t epoch_ = 0;
};

// Nearest class-mean classifier fitted on the train split, scored on test.
Metrics nearest_mean_baseline(const Dataset& data, const SplitSpec& split);

}  // namespace cssm
