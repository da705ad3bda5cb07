// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cssm {

AttnParams AttnParams::init(std::size_t d_model, std::size_t attn_dim, Rng& rng) {
  AttnParams p;
  p.wq = fan_in_param(d_model, attn_dim, rng);
  p.wk = fan_in_param(d_model, attn_dim, rng);
  p.v_agg = fan_in_param(d_model, 1, rng);
  p.alpha = constant_param({1}, 0.0);
  return p;
}

ParamList AttnParams::params(const std::string& prefix) const {
  return {{prefix + ".wq", wq}, {prefix + ".wk", wk}, {prefix + ".v_agg", v_agg}, {prefix + ".alpha", alpha}};
}

Tensor hybrid_score(const Tensor& x, const Tensor& prior, const AttnParams& p) {
  if (x.rank() != 3 || prior.rank() != 2 || prior.dim(0) != x.dim(0) || prior.dim(1) != x.dim(1)) {
    throw ShapeError("hybrid_score: tokens " + shape_str(x.shape()) + " vs prior " + shape_str(prior.shape()));
  }
  const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
  const Tensor flat = reshape(x, {nb * n, d});
  const Tensor prior_flat = reshape(prior, {nb * n, 1});
  const Tensor gate = sigmoid(p.alpha);
  const Tensor open = add_scalar(scale(gate, -1.0), 1.0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.attn_dim()));
  std::vector<Tensor> rows;
  rows.reserve(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), b * n);
    const Tensor xb = gather_rows(flat, idx);
    const Tensor q = matmul(xb, p.wq);
    const Tensor k = matmul(xb, p.wk);
    const Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1);
    const Tensor dynamic = matmul(attn, matmul(xb, p.v_agg));  // [n,1]
    const Tensor pb = gather_rows(prior_flat, idx);
    rows.push_back(add(mul(dynamic, gate), mul(pb, open)));
  }
  return reshape(concat_rows(rows), {nb, n});
}

std::size_t kept_count(std::size_t n, double keep_ratio) {
  const double raw = std::ceil(keep_ratio * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

ScoredSequence select_and_sort(const Tensor& x, const Tensor& scores, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("select_and_sort: keep ratio must lie in (0,1]");
  if (x.rank() != 3 || scores.rank() != 2 || scores.dim(0) != x.dim(0) || scores.dim(1) != x.dim(1)) {
    throw ShapeError("select_and_sort: tokens " + shape_str(x.shape()) + " vs scores " + shape_str(scores.shape()));
  }
  const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2), kept = kept_count(n, keep_ratio);
  ScoredSequence seq;
  seq.length = n;
  std::vector<std::size_t> flat_idx;
  flat_idx.reserve(nb * kept);
  for (std::size_t b = 0; b < nb; ++b) {
    const double* s = scores.data().data() + b * n;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [s](std::size_t i, std::size_t j) { return s[i] > s[j]; });
    std::vector<std::size_t> keep(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(kept));
    std::vector<std::size_t> drop(perm.begin() + static_cast<std::ptrdiff_t>(kept), perm.end());
    std::sort(drop.begin(), drop.end());
    std::vector<double> ks;
    for (std::size_t i : keep) {
      ks.push_back(s[i]);
      flat_idx.push_back(b * n + i);
    }
    seq.order.push_back(std::move(keep));
    seq.dropped.push_back(std::move(drop));
    seq.scores.push_back(std::move(ks));
  }
  seq.tokens = reshape(gather_rows(reshape(x, {nb * n, d}), flat_idx), {nb, kept, d});
  return seq;
}

Tensor restore_order(const Tensor& processed, const ScoredSequence& seq, const Tensor& original) {
  const std::size_t nb = seq.order.size(), n = seq.length;
  if (processed.rank() != 3 || original.rank() != 3 || processed.dim(0) != nb || original.dim(0) != nb ||
      original.dim(1) != n || processed.dim(2) != original.dim(2) ||
      (nb > 0 && processed.dim(1) != seq.order[0].size())) {
    throw ContractError("restore_order: processed " + shape_str(processed.shape()) + ", original " +
                        shape_str(original.shape()) + " do not match the recorded ordering");
  }
  const std::size_t d = original.dim(2), kept = processed.dim(1);
  std::vector<std::size_t> kept_rows, drop_rows;
  for (std::size_t b = 0; b < nb; ++b) {
    if (seq.order[b].size() != kept || seq.order[b].size() + seq.dropped[b].size() != n) {
      throw ContractError("restore_order: ragged ordering for batch item " + std::to_string(b));
    }
    for (std::size_t i : seq.order[b]) kept_rows.push_back(b * n + i);
    for (std::size_t i : seq.dropped[b]) drop_rows.push_back(b * n + i);
  }
  Tensor out = scatter_rows(reshape(processed, {nb * kept, d}), kept_rows, nb * n);
  if (!drop_rows.empty()) {
    const Tensor bypass = gather_rows(reshape(original, {nb * n, d}), drop_rows);
    out = add(out, scatter_rows(bypass, drop_rows, nb * n));
  }
  return reshape(out, {nb, n, d});
}

}  // namespace cssm
