// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/cluster.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cssm {

namespace {

double sq_dist(std::span<const double> x, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - c[j]) * (x[j] - c[j]);
  return s;
}

void check_features(std::span<const double> features, std::size_t dim) {
  if (dim == 0 || features.size() % dim != 0) {
    throw ShapeError("cluster: " + std::to_string(features.size()) +
                     " feature values not divisible by dim " + std::to_string(dim));
  }
}

}  // namespace

ClusterState ClusterState::create(const ClusterConfig& cfg, std::size_t tokens) {
  if (cfg.num_classes == 0 || cfg.dim == 0 || cfg.clusters_per_class == 0) {
    throw ConfigError("cluster: classes, dim and clusters-per-class must be positive");
  }
  if (!(cfg.momentum > 0.0 && cfg.momentum < 1.0)) throw ConfigError("cluster: momentum must lie in (0,1)");
  if (!(cfg.tau > 0.0)) throw ConfigError("cluster: temperature must be positive");
  ClusterState s;
  s.cfg = cfg;
  const std::size_t k = cfg.num_classes * cfg.clusters_per_class;
  s.centers.assign(k * cfg.dim, 0.0);
  s.initialized.assign(k, 0);
  s.assignment.assign(tokens, 0);
  s.prior.assign(tokens, 1.0);
  return s;
}

std::size_t ClusterState::num_initialized() const {
  std::size_t n = 0;
  for (char c : initialized) n += c ? 1 : 0;
  return n;
}

LabelGroups group_by_label(std::span<const int> labels) {
  LabelGroups groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 0) groups[labels[i]].push_back(i);
  }
  return groups;
}

std::vector<double> group_mean(std::span<const double> features, std::size_t dim,
                               std::span<const std::size_t> rows) {
  check_features(features, dim);
  std::vector<double> mu(dim, 0.0);
  if (rows.empty()) return mu;
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < dim; ++j) mu[j] += features[r * dim + j];
  }
  for (double& v : mu) v /= static_cast<double>(rows.size());
  return mu;
}

void ema_update(ClusterState& state, const std::map<std::size_t, std::vector<double>>& means) {
  const double m = state.cfg.momentum;
  const std::size_t dim = state.cfg.dim;
  for (const auto& [k, mu] : means) {
    if (k >= state.num_clusters() || mu.size() != dim) {
      throw IndexError("ema_update: center " + std::to_string(k) + " / mean width " +
                       std::to_string(mu.size()));
    }
    double* c = state.centers.data() + k * dim;
    for (std::size_t j = 0; j < dim; ++j) c[j] = m * c[j] + (1.0 - m) * mu[j];
  }
}

void update_centers(ClusterState& state, std::span<const double> features,
                    std::span<const int> labels, Rng& rng) {
  const std::size_t dim = state.cfg.dim, per = state.cfg.clusters_per_class;
  check_features(features, dim);
  if (features.size() / dim != labels.size()) {
    throw ShapeError("update_centers: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.size() / dim) + " feature rows");
  }
  std::normal_distribution<double> jitter(0.0, state.cfg.init_jitter);
  std::map<std::size_t, std::vector<double>> means;
  for (const auto& [label, rows] : group_by_label(labels)) {
    const auto cls = static_cast<std::size_t>(label - 1);
    if (cls >= state.cfg.num_classes) {
      throw IndexError("update_centers: label " + std::to_string(label) + " exceeds " +
                       std::to_string(state.cfg.num_classes) + " classes");
    }
    const std::size_t base = cls * per;
    if (!state.initialized[base]) {
      const auto mu = group_mean(features, dim, rows);
      for (std::size_t j = 0; j < per; ++j) {
        double* c = state.centers.data() + (base + j) * dim;
        for (std::size_t q = 0; q < dim; ++q) c[q] = mu[q] + jitter(rng);
        state.initialized[base + j] = 1;
      }
      continue;
    }
    if (per == 1) {
      means[base] = group_mean(features, dim, rows);
      continue;
    }
    std::vector<std::vector<std::size_t>> split(per);
    for (std::size_t r : rows) {
      const std::span<const double> x(features.data() + r * dim, dim);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < per; ++j) {
        const double d = sq_dist(x, state.center(base + j));
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      split[best].push_back(r);
    }
    for (std::size_t j = 0; j < per; ++j) {
      if (!split[j].empty()) means[base + j] = group_mean(features, dim, split[j]);
    }
  }
  ema_update(state, means);
}

std::vector<int> assign_nearest(std::span<const double> features, const ClusterState& state) {
  const std::size_t dim = state.cfg.dim;
  check_features(features, dim);
  if (state.num_initialized() == 0) throw ConfigError("assign_nearest: no initialized cluster centers");
  const std::size_t n = features.size() / dim, k = state.num_clusters();
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(features.data() + i * dim, dim);
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (!state.initialized[c]) continue;
      const double d = sq_dist(x, state.center(c));
      if (d < best_d) {
        best_d = d;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

Tensor soft_assign(const Tensor& features, const Tensor& centers, double tau) {
  if (!(tau > 0.0)) throw ConfigError("soft_assign: temperature must be positive");
  const std::size_t d = features.shape().back();
  if (centers.rank() != 2 || centers.dim(1) != d) {
    throw ShapeError("soft_assign: features " + shape_str(features.shape()) + " vs centers " +
                     shape_str(centers.shape()));
  }
  const std::size_t n = features.numel() / d, k = centers.dim(0);
  const Tensor x = features.rank() == 2 ? features : reshape(features, {n, d});
  const Tensor xx = sum_axis(mul(x, x), 1);                                     // [n,1]
  const Tensor cc = reshape(sum_axis(mul(centers, centers), 1), {k});           // [k]
  const Tensor cross = matmul(x, transpose(centers));                          // [n,k]
  const Tensor d2 = add(sub(xx, scale(cross, 2.0)), cc);
  const Tensor a = softmax(scale(d2, -1.0 / tau), 1);
  Shape out = features.shape();
  out.back() = k;
  return a.shape() == out ? a : reshape(a, out);
}

Tensor cluster_loss(const Tensor& features, const Tensor& weights) {
  if (features.rank() != 3 || weights.rank() != 3 || features.dim(0) != weights.dim(0) ||
      features.dim(1) != weights.dim(1)) {
    throw ShapeError("cluster_loss: features " + shape_str(features.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  const std::size_t nb = features.dim(0), l = features.dim(1), d = features.dim(2), k = weights.dim(2);
  const Tensor f2 = reshape(features, {nb * l, d});
  const Tensor a2 = reshape(weights, {nb * l, k});
  Tensor intra_total, inter_total;
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<std::size_t> rows(l);
    for (std::size_t i = 0; i < l; ++i) rows[i] = b * l + i;
    const Tensor f = gather_rows(f2, rows);
    const Tensor a = gather_rows(a2, rows);
    const Tensor fhat = div(f, add_scalar(sqrt(sum_axis(mul(f, f), 1)), 1e-8));
    const Tensor w = sum_axis(a, 0);                                             // [1,k]
    const Tensor c = div(matmul(transpose(a), fhat), add_scalar(transpose(w), 1e-12));  // [k,d]
    const Tensor ff = sum_axis(mul(fhat, fhat), 1);                              // [l,1]
    const Tensor cc = reshape(sum_axis(mul(c, c), 1), {k});
    const Tensor d2 = add(sub(ff, scale(matmul(fhat, transpose(c)), 2.0)), cc);  // [l,k]
    const Tensor intra = sum(mul(a, d2));
    intra_total = intra_total.defined() ? add(intra_total, intra) : intra;
    if (k > 1) {
      const Tensor cn = div(c, add_scalar(sqrt(sum_axis(mul(c, c), 1)), 1e-12));
      const Tensor gram = matmul(cn, transpose(cn));
      std::vector<double> eye(k * k, 0.0);
      for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
      const Tensor off = sub(sum(gram), sum(mul(gram, Tensor::from({k, k}, std::move(eye)))));
      inter_total = inter_total.defined() ? add(inter_total, off) : off;
    }
  }
  Tensor loss = scale(intra_total, 1.0 / static_cast<double>(nb * l));
  if (k > 1) loss = add(loss, scale(inter_total, 1.0 / static_cast<double>(nb * k * (k - 1))));
  return loss;
}

Tensor initialized_centers(const ClusterState& state, std::vector<std::size_t>* index) {
  std::vector<double> v;
  std::size_t count = 0;
  if (index) index->clear();
  for (std::size_t c = 0; c < state.num_clusters(); ++c) {
    if (!state.initialized[c]) continue;
    auto row = state.center(c);
    v.insert(v.end(), row.begin(), row.end());
    if (index) index->push_back(c);
    ++count;
  }
  if (count == 0) throw ConfigError("no initialized cluster centers");
  return Tensor::from({count, state.cfg.dim}, std::move(v));
}

}  // namespace cssm
