// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/spatial.hpp"

#include <numeric>
#include <string>

namespace cssm {

TokenPartition partition(std::span<const int> map, std::size_t batch, std::size_t length,
                         std::size_t clusters) {
  if (map.size() != batch * length) {
    throw ShapeError("partition: map has " + std::to_string(map.size()) + " entries, expected " +
                     std::to_string(batch * length));
  }
  TokenPartition part;
  part.batch = batch;
  part.length = length;
  part.clusters = clusters;
  part.index.assign(batch, std::vector<std::vector<std::size_t>>(clusters));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < length; ++l) {
      const int c = map[b * length + l];
      if (c < 0 || static_cast<std::size_t>(c) >= clusters) {
        throw IndexError("partition: cluster id " + std::to_string(c) + " outside [0," +
                         std::to_string(clusters) + ")");
      }
      part.index[b][static_cast<std::size_t>(c)].push_back(l);
    }
  }
  return part;
}

std::vector<std::vector<Tensor>> gather_parts(const Tensor& x, const TokenPartition& part) {
  if (x.rank() != 3 || x.dim(0) != part.batch || x.dim(1) != part.length) {
    throw ShapeError("gather_parts: tokens " + shape_str(x.shape()) + " vs partition of " +
                     std::to_string(part.batch) + "x" + std::to_string(part.length));
  }
  const std::size_t d = x.dim(2);
  const Tensor flat = reshape(x, {part.batch * part.length, d});
  std::vector<std::vector<Tensor>> out(part.batch, std::vector<Tensor>(part.clusters));
  for (std::size_t b = 0; b < part.batch; ++b) {
    for (std::size_t c = 0; c < part.clusters; ++c) {
      const auto& idx = part.index[b][c];
      if (idx.empty()) continue;
      std::vector<std::size_t> rows(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) rows[i] = b * part.length + idx[i];
      out[b][c] = reshape(gather_rows(flat, rows), {1, idx.size(), d});
    }
  }
  return out;
}

SpatialParams SpatialParams::init(const SpatialConfig& cfg, Rng& rng) {
  SpatialParams p;
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    p.local.push_back(SsmParams::init(cfg.ssm, rng));
    p.attn.push_back(AttnParams::init(cfg.ssm.d_model, cfg.attn_dim, rng));
  }
  p.global_norm = LayerNorm::init(cfg.ssm.d_model);
  p.global = SsmParams::init(cfg.ssm, rng);
  p.out_norm = LayerNorm::init(cfg.ssm.d_model);
  return p;
}

ParamList SpatialParams::params() const {
  ParamList out;
  for (std::size_t c = 0; c < local.size(); ++c) {
    append_params(out, local[c].params("spatial.local" + std::to_string(c)));
    append_params(out, attn[c].params("spatial.attn" + std::to_string(c)));
  }
  append_params(out, global_norm.params("spatial.global_norm"));
  append_params(out, global.params("spatial.global"));
  append_params(out, out_norm.params("spatial.out_norm"));
  return out;
}

std::vector<std::vector<Tensor>> local_pass(const Tensor& x, const TokenPartition& part,
                                            std::span<const double> prior, const SpatialParams& p,
                                            const SpatialConfig& cfg) {
  if (p.local.size() < part.clusters || p.attn.size() < part.clusters) {
    throw ConfigError("local_pass: " + std::to_string(part.clusters) + " clusters but " +
                      std::to_string(p.local.size()) + " local blocks");
  }
  if (prior.size() != part.batch * part.length) {
    throw ShapeError("local_pass: prior has " + std::to_string(prior.size()) + " entries");
  }
  auto parts = gather_parts(x, part);
  std::vector<std::vector<Tensor>> z(part.batch, std::vector<Tensor>(part.clusters));
  for (std::size_t b = 0; b < part.batch; ++b) {
    for (std::size_t c = 0; c < part.clusters; ++c) {
      const Tensor& xc = parts[b][c];
      if (!xc.defined()) continue;
      if (!cfg.use_attention) {
        z[b][c] = ssm_forward(xc, p.local[c]);
        continue;
      }
      const auto& idx = part.index[b][c];
      std::vector<double> pc(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) pc[i] = prior[b * part.length + idx[i]];
      const Tensor scores = hybrid_score(xc, Tensor::from({1, idx.size()}, std::move(pc)), p.attn[c]);
      const ScoredSequence seq = select_and_sort(xc, scores, cfg.keep_ratio);
      z[b][c] = restore_order(ssm_forward(seq.tokens, p.local[c]), seq, xc);
    }
  }
  return z;
}

Tensor reconstruct_and_global(const Tensor& x, const std::vector<std::vector<Tensor>>& z,
                              const TokenPartition& part, const LayerNorm& norm, const SsmParams& global) {
  if (x.rank() != 3 || x.dim(0) != part.batch || x.dim(1) != part.length || z.size() != part.batch) {
    throw ContractError("reconstruct_and_global: tokens " + shape_str(x.shape()) + " misaligned with partition");
  }
  const std::size_t d = x.dim(2), l = part.length;
  std::vector<Tensor> rows;
  for (std::size_t b = 0; b < part.batch; ++b) {
    if (z[b].size() != part.clusters) throw ContractError("reconstruct_and_global: cluster count mismatch");
    Tensor recon;
    for (std::size_t c = 0; c < part.clusters; ++c) {
      const auto& idx = part.index[b][c];
      const Tensor& zc = z[b][c];
      if (idx.empty()) {
        if (zc.defined()) throw ContractError("reconstruct_and_global: output for empty cluster " + std::to_string(c));
        continue;
      }
      if (!zc.defined() || zc.numel() != idx.size() * d) {
        throw ContractError("reconstruct_and_global: cluster " + std::to_string(c) + " expects " +
                            std::to_string(idx.size()) + " tokens");
      }
      const Tensor placed = scatter_rows(reshape(zc, {idx.size(), d}), idx, l);
      recon = recon.defined() ? add(recon, placed) : placed;
    }
    rows.push_back(recon);
  }
  const Tensor z_recon = reshape(concat_rows(rows), {part.batch, l, d});
  return ssm_forward(norm(add(x, z_recon)), global);
}

Tensor spatial_forward(const Tensor& x, std::span<const int> map, std::span<const double> prior,
                       const SpatialParams& p, const SpatialConfig& cfg) {
  const TokenPartition part = partition(map, x.dim(0), x.dim(1), cfg.clusters);
  const auto z = local_pass(x, part, prior, p, cfg);
  return p.out_norm(reconstruct_and_global(x, z, part, p.global_norm, p.global));
}

}  // namespace cssm
