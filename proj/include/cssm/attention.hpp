// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-attention token ordering inside one cluster. A hybrid score mixes
// scaled dot-product saliency with the cluster-membership prior through a
// learned sigmoid gate; tokens are then sorted by descending score and the
// tail beyond the keep ratio is set aside.

#pragma once

#include <cstddef>
#include <vector>

#include "cssm/params.hpp"

namespace cssm {

struct AttnParams {
  Tensor wq;     // [D, d]
  Tensor wk;     // [D, d]
  Tensor v_agg;  // [D, 1], one scalar context value per token
  Tensor alpha;  // [1], gate logit

  static AttnParams init(std::size_t d_model, std::size_t attn_dim, Rng& rng);
  std::size_t attn_dim() const { return wq.dim(1); }
  ParamList params(const std::string& prefix) const;
};

// x [B, N, D], prior [B, N] -> [B, N]:
//   sigmoid(alpha) * softmax(Q K^T / sqrt(d)) (x v_agg) + (1 - sigmoid(alpha)) * prior
Tensor hybrid_score(const Tensor& x, const Tensor& prior, const AttnParams& p);

struct ScoredSequence {
  Tensor tokens;                                 // [B, N_kept, D]
  std::vector<std::vector<std::size_t>> order;   // kept: sorted position -> original position
  std::vector<std::vector<std::size_t>> dropped; // original positions set aside, ascending
  std::vector<std::vector<double>> scores;       // kept scores, non-increasing
  std::size_t length = 0;                        // N before selection
};

// max(1, ceil(ratio * n)).
std::size_t kept_count(std::size_t n, double keep_ratio);

// Descending score, ties by ascending original index. Throws ConfigError
// when keep_ratio is outside (0, 1].
ScoredSequence select_and_sort(const Tensor& x, const Tensor& scores, double keep_ratio);

// Returns processed rows to their original positions; set-aside rows are
// copied through from `original`.
Tensor restore_order(const Tensor& processed, const ScoredSequence& seq, const Tensor& original);

}  // namespace cssm
