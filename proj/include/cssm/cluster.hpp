// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Learnable clustering: label-guided prototype tracking by exponential
// moving average, nearest-prototype routing and the contrastive cluster
// loss. Prototype state lives outside the autodiff tape.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "cssm/params.hpp"
#include "cssm/tensor.hpp"

namespace cssm {

struct ClusterConfig {
  std::size_t num_classes = 0;
  std::size_t clusters_per_class = 3;
  std::size_t dim = 0;
  double momentum = 0.9;
  double tau = 1.0;
  double init_jitter = 1e-2;
};

struct ClusterState {
  ClusterConfig cfg;
  std::vector<double> centers;    // [K, D]
  std::vector<char> initialized;  // [K]
  std::vector<int> assignment;    // [B*L], routing map of the latest step
  std::vector<double> prior;      // [B*L], soft weight of each token's own cluster

  // Fresh state: no initialized centers, every token routed to cluster 0.
  static ClusterState create(const ClusterConfig& cfg, std::size_t tokens);

  std::size_t num_clusters() const { return cfg.num_classes * cfg.clusters_per_class; }
  std::size_t num_initialized() const;
  std::span<const double> center(std::size_t k) const {
    return {centers.data() + k * cfg.dim, cfg.dim};
  }
};

// Class label (1-based; 0 = unlabeled) -> flat token indices, ascending.
using LabelGroups = std::map<int, std::vector<std::size_t>>;

LabelGroups group_by_label(std::span<const int> labels);

// Arithmetic mean of the selected rows of a [n, dim] row-major matrix.
std::vector<double> group_mean(std::span<const double> features, std::size_t dim,
                               std::span<const std::size_t> rows);

// c_k <- m c_k + (1 - m) mu_k for every center index present in `means`.
void ema_update(ClusterState& state, const std::map<std::size_t, std::vector<double>>& means);

// One label-guided update: groups `features` ([n, dim]) by `labels`,
// initializes first-seen classes from their mean plus jitter, otherwise
// splits each class among its sub-centers by nearest sub-center and applies
// ema_update with the per-sub-center means.
void update_centers(ClusterState& state, std::span<const double> features,
                    std::span<const int> labels, Rng& rng);

// argmin_k ||x_i - c_k||^2 over initialized centers, lowest index on ties.
// Throws ConfigError when no center is initialized.
std::vector<int> assign_nearest(std::span<const double> features, const ClusterState& state);

// softmax_k(-||x - c_k||^2 / tau). features [..., D], centers [K, D] -> [..., K].
Tensor soft_assign(const Tensor& features, const Tensor& centers, double tau);

// Intra-cluster weighted variance of the L2-normalized features around the
// soft-weighted batch centers, plus mean pairwise cosine similarity between
// distinct batch centers. features [B, L, D], weights [B, L, K] -> [1].
Tensor cluster_loss(const Tensor& features, const Tensor& weights);

// Initialized centers as a constant [K_init, D] tensor, and their indices.
Tensor initialized_centers(const ClusterState& state, std::vector<std::size_t>* index = nullptr);

}  // namespace cssm
