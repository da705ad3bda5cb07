// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace cssm {

// ---- splits ----------------------------------------------------------------

std::vector<std::size_t> SplitSpec::all(const std::vector<std::vector<std::size_t>>& role) const {
  std::vector<std::size_t> out;
  for (const auto& v : role) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

SplitSpec make_splits(const LabelGrid& labels, std::size_t num_classes, std::uint64_t seed, const SplitRule& rule) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y == 0) continue;
    if (y < 0 || static_cast<std::size_t>(y) > num_classes) {
      throw DatasetError("make_splits: pixel " + std::to_string(i) + " has label " + std::to_string(y) +
                         " outside 0.." + std::to_string(num_classes));
    }
    members[static_cast<std::size_t>(y - 1)].push_back(i);
  }
  SplitSpec s;
  s.seed = seed;
  s.rule = rule;
  s.train.resize(num_classes);
  s.val.resize(num_classes);
  s.test.resize(num_classes);
  Rng rng(seed);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = members[c];
    const std::size_t n = idx.size();
    if (n < 2) {
      throw DatasetError("make_splits: class " + std::to_string(c + 1) + " has " + std::to_string(n) +
                         " labeled pixels, need at least 2");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_train, n_val;
    if (n >= rule.small_class_threshold) {
      n_train = rule.train_per_class;
      n_val = rule.val_per_class;
    } else {
      const std::size_t half = (n + 1) / 2;
      n_train = static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(half) + 0.5));
      n_val = half - n_train;
    }
    auto cut = [&](std::size_t from, std::size_t count) {
      std::vector<std::size_t> v(idx.begin() + static_cast<std::ptrdiff_t>(from),
                                 idx.begin() + static_cast<std::ptrdiff_t>(from + count));
      std::sort(v.begin(), v.end());
      return v;
    };
    s.train[c] = cut(0, n_train);
    s.val[c] = cut(n_train, n_val);
    s.test[c] = cut(n_train + n_val, n - n_train - n_val);
  }
  return s;
}

// ---- metrics ---------------------------------------------------------------

Metrics metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
  Metrics m;
  const std::size_t k = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != k) throw ShapeError("metrics: confusion matrix must be square");
  }
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  double total = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = static_cast<double>(confusion[i][j]);
      rows[i] += v;
      cols[j] += v;
      total += v;
      if (i == j) diag += v;
    }
  }
  m.per_class.resize(k);
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i] == 0.0) continue;
    m.per_class[i] = static_cast<double>(confusion[i][i]) / rows[i];
    recall_sum += *m.per_class[i];
    ++present;
  }
  if (total > 0.0) {
    m.oa = diag / total;
    m.aa = present ? recall_sum / static_cast<double>(present) : 0.0;
    double pe = 0.0;
    for (std::size_t i = 0; i < k; ++i) pe += rows[i] * cols[i];
    pe /= total * total;
    m.kappa = pe < 1.0 ? (m.oa - pe) / (1.0 - pe) : (m.oa == 1.0 ? 1.0 : 0.0);
  }
  m.confusion = std::move(confusion);
  return m;
}

Metrics evaluate_predictions(const LabelGrid& labels, std::span<const int> predictions,
                             std::span<const std::size_t> pixels, std::size_t num_classes) {
  std::vector<std::vector<std::int64_t>> cm(num_classes, std::vector<std::int64_t>(num_classes, 0));
  for (std::size_t p : pixels) {
    const int y = labels.labels.at(p), q = predictions[p];
    if (y < 1 || q < 1 || static_cast<std::size_t>(y) > num_classes || static_cast<std::size_t>(q) > num_classes) {
      throw IndexError("evaluate: pixel " + std::to_string(p) + " has label " + std::to_string(y) +
                       ", prediction " + std::to_string(q));
    }
    ++cm[static_cast<std::size_t>(y - 1)][static_cast<std::size_t>(q - 1)];
  }
  return metrics_from_confusion(std::move(cm));
}

std::string format_report(const Metrics& m, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-24s %8s\n", "No.", "Class", "Accuracy");
  os << line;
  for (std::size_t i = 0; i < m.per_class.size(); ++i) {
    const std::string name = i < class_names.size() ? class_names[i] : "class" + std::to_string(i + 1);
    const std::string tag = "C" + std::to_string(i + 1);
    if (m.per_class[i]) {
      std::snprintf(line, sizeof line, "%-6s %-24s %8.2f\n", tag.c_str(), name.c_str(), 100.0 * *m.per_class[i]);
    } else {
      std::snprintf(line, sizeof line, "%-6s %-24s %8s\n", tag.c_str(), name.c_str(), "-");
    }
    os << line;
  }
  std::snprintf(line, sizeof line, "%-6s %-24s %8.2f\n", "OA", "-", 100.0 * m.oa);
  os << line;
  std::snprintf(line, sizeof line, "%-6s %-24s %8.2f\n", "AA", "-", 100.0 * m.aa);
  os << line;
  std::snprintf(line, sizeof line, "%-6s %-24s %8.2f\n", "Kappa", "-", 100.0 * m.kappa);
  os << line;
  return os.str();
}

// ---- optimizer -------------------------------------------------------------

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
  zero_grad();
}

// ---- training --------------------------------------------------------------

Trainer::Trainer(const Dataset& data, SplitSpec split, const ModelConfig& model_cfg, const TrainConfig& train_cfg)
    : data_(&data),
      split_(std::move(split)),
      model_cfg_(model_cfg),
      train_cfg_(train_cfg),
      rng_(train_cfg.seed),
      model_(model_cfg, rng_),
      clusters_(ClusterState::create({model_cfg.num_classes, model_cfg.clusters_per_class, model_cfg.hidden,
                                      train_cfg.momentum, train_cfg.tau, 1e-2},
                                     data.cube.pixels())),
      adam_(model_.params(), AdamConfig{train_cfg.lr}),
      input_(ModelInput::from_cube(data.cube, model_cfg.group_size)) {
  if (data.num_classes() != model_cfg.num_classes || data.cube.bands != model_cfg.bands) {
    throw ConfigError("trainer: model configured for " + std::to_string(model_cfg.num_classes) + " classes / " +
                      std::to_string(model_cfg.bands) + " bands, data has " + std::to_string(data.num_classes()) +
                      " / " + std::to_string(data.cube.bands));
  }
  if (train_cfg.cluster_weight < 0.0) throw ConfigError("trainer: cluster weight must be non-negative");
  const std::size_t l = data.cube.pixels();
  train_labels_.assign(l, 0);
  targets_.assign(l, -1);
  train_mask_.assign(l, 0);
  for (std::size_t c = 0; c < split_.train.size(); ++c) {
    for (std::size_t p : split_.train[c]) {
      train_labels_[p] = static_cast<int>(c + 1);
      targets_[p] = static_cast<int>(c);
      train_mask_[p] = 1;
    }
  }
}

void Trainer::route(std::span<const double> features, std::vector<int>& map, std::vector<double>& prior) const {
  if (clusters_.num_initialized() == 0) return;
  map = assign_nearest(features, clusters_);
  std::vector<std::size_t> index;
  const Tensor centers = initialized_centers(clusters_, &index);
  std::vector<std::size_t> slot(clusters_.num_clusters(), 0);
  for (std::size_t i = 0; i < index.size(); ++i) slot[index[i]] = i;
  const std::size_t n = map.size(), d = clusters_.cfg.dim, k = index.size();
  NoGradGuard no_grad;
  const Tensor a = soft_assign(Tensor::from({n, d}, {features.begin(), features.end()}), centers, clusters_.cfg.tau);
  prior.resize(n);
  for (std::size_t i = 0; i < n; ++i) prior[i] = a[i * k + slot[static_cast<std::size_t>(map[i])]];
}

StepStats Trainer::step() {
  StepStats st;
  st.epoch = ++epoch_;
  std::vector<double> mid;
  {
    NoGradGuard no_grad;
    const Tensor f = model_.spatial_features(input_, clusters_.assignment, clusters_.prior);
    mid.assign(f.data().begin(), f.data().end());
  }
  update_centers(clusters_, mid, train_labels_, rng_);
  route(mid, clusters_.assignment, clusters_.prior);

  Tape tape;
  const ModelOutput out = model_.forward(input_, clusters_.assignment, clusters_.prior);
  const Tensor ce = cross_entropy(out.logits, targets_, train_mask_);
  Tensor total = ce;
  st.ce = ce.item();
  if (train_cfg_.use_cluster_loss && train_cfg_.cluster_weight > 0.0) {
    const Tensor centers = initialized_centers(clusters_);
    const Tensor weights = soft_assign(out.spatial, centers, train_cfg_.tau);
    const Tensor lc = cluster_loss(out.spatial, weights);
    st.cluster = lc.item();
    total = add(ce, scale(lc, train_cfg_.cluster_weight));
  }
  st.total = total.item();
  if (!std::isfinite(st.total)) {
    std::ostringstream os;
    os << "training diverged at epoch " << epoch_ << ": ce=" << st.ce << " cluster=" << st.cluster
       << " total=" << st.total;
    throw NumericError(os.str());
  }

  const std::size_t k = model_cfg_.num_classes;
  std::size_t hit = 0, count = 0;
  for (std::size_t c = 0; c < split_.val.size(); ++c) {
    for (std::size_t p : split_.val[c]) {
      const double* row = out.logits.data().data() + p * k;
      hit += static_cast<std::size_t>(std::max_element(row, row + k) - row) == c ? 1 : 0;
      ++count;
    }
  }
  st.val_oa = count ? static_cast<double>(hit) / static_cast<double>(count) : 0.0;

  tape.backward(total);
  adam_.step();
  return st;
}

std::vector<int> Trainer::predict() const {
  std::vector<int> map = clusters_.assignment;
  std::vector<double> prior = clusters_.prior;
  NoGradGuard no_grad;
  const Tensor f = model_.spatial_features(input_, map, prior);
  route(f.data(), map, prior);
  const ModelOutput out = model_.forward(input_, map, prior);
  const std::size_t l = input_.tokens(), k = model_cfg_.num_classes;
  std::vector<int> pred(l);
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = out.logits.data().data() + i * k;
    pred[i] = static_cast<int>(std::max_element(row, row + k) - row) + 1;
  }
  return pred;
}

Metrics Trainer::evaluate() const {
  const auto pred = predict();
  return evaluate_predictions(data_->labels, pred, split_.all(split_.test), model_cfg_.num_classes);
}

Metrics nearest_mean_baseline(const Dataset& data, const SplitSpec& split) {
  const HsiCube& cube = data.cube;
  const std::size_t k = data.num_classes(), c = cube.bands, l = cube.pixels();
  std::vector<double> means(k * c, 0.0);
  for (std::size_t cls = 0; cls < k; ++cls) {
    if (split.train[cls].empty()) throw DatasetError("baseline: class " + std::to_string(cls + 1) + " has no training pixels");
    for (std::size_t p : split.train[cls])
      for (std::size_t b = 0; b < c; ++b) means[cls * c + b] += cube.data[b * l + p];
    for (std::size_t b = 0; b < c; ++b) means[cls * c + b] /= static_cast<double>(split.train[cls].size());
  }
  std::vector<int> pred(l, 1);
  for (std::size_t p = 0; p < l; ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t cls = 0; cls < k; ++cls) {
      double d = 0.0;
      for (std::size_t b = 0; b < c; ++b) {
        const double e = cube.data[b * l + p] - means[cls * c + b];
        d += e * e;
      }
      if (d < best) {
        best = d;
        pred[p] = static_cast<int>(cls + 1);
      }
    }
  }
  return evaluate_predictions(data.labels, pred, split.all(split.test), k);
}

}  // namespace cssm
