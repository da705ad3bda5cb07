// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cluster-guided spatial branch. Tokens are split by cluster map, each
// cluster is ordered by dual attention and scanned by its own SSM block,
// results are scattered back onto the raster, added to the input and
// passed through a shared global SSM block.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cssm/attention.hpp"
#include "cssm/ssm.hpp"

namespace cssm {

struct TokenPartition {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t clusters = 0;
  // index[b][c]: raster positions of cluster c in batch item b, ascending.
  std::vector<std::vector<std::vector<std::size_t>>> index;

  std::size_t count(std::size_t b, std::size_t c) const { return index[b][c].size(); }
};

// map is [batch * length] with values in [0, clusters).
TokenPartition partition(std::span<const int> map, std::size_t batch, std::size_t length,
                         std::size_t clusters);

// Per-cluster token tensors [1, N_c, D]; undefined for empty clusters.
std::vector<std::vector<Tensor>> gather_parts(const Tensor& x, const TokenPartition& part);

struct SpatialConfig {
  std::size_t clusters = 1;
  SsmConfig ssm;
  std::size_t attn_dim = 16;
  double keep_ratio = 1.0;
  bool use_attention = true;
};

struct SpatialParams {
  std::vector<SsmParams> local;   // one per cluster
  std::vector<AttnParams> attn;   // one per cluster
  LayerNorm global_norm;
  SsmParams global;
  LayerNorm out_norm;

  static SpatialParams init(const SpatialConfig& cfg, Rng& rng);
  ParamList params() const;
};

// Z_c = Mamba_c(DualAttn(X_c)) for every non-empty cluster. prior is
// [batch * length]: each token's soft weight for its own cluster.
std::vector<std::vector<Tensor>> local_pass(const Tensor& x, const TokenPartition& part,
                                            std::span<const double> prior, const SpatialParams& p,
                                            const SpatialConfig& cfg);

// Y = Mamba_global(norm(x + scatter(Z))). Throws ContractError when Z does
// not line up with the partition.
Tensor reconstruct_and_global(const Tensor& x, const std::vector<std::vector<Tensor>>& z,
                              const TokenPartition& part, const LayerNorm& norm, const SsmParams& global);

// Whole branch: partition, local pass, reconstruction, global block and the
// output layer norm. x [B, L, D] -> [B, L, D].
Tensor spatial_forward(const Tensor& x, std::span<const int> map, std::span<const double> prior,
                       const SpatialParams& p, const SpatialConfig& cfg);

}  // namespace cssm
