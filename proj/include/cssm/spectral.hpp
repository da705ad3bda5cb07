// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cssm/ssm.hpp"

namespace cssm {

// Per-pixel spectra cut into contiguous band groups, band-ascending. The
// last group is zero padded when the group size does not divide C.
struct SpectralTokens {
  std::size_t batch = 0, bands = 0, height = 0, width = 0;
  std::size_t groups = 0;      // N = ceil(C / G)
  std::size_t group_size = 0;  // G
  std::vector<double> values;  // [B*H*W, N, G]
  std::vector<double> mask;    // [N*G], 1 for a real band, 0 for padding

  std::size_t pixels() const { return batch * height * width; }
  std::size_t padding() const { return groups * group_size - bands; }
};

// cube is [B, C, H, W] row-major. Throws ConfigError if G == 0 or G > C.
SpectralTokens spectral_tokenize(std::span<const double> cube, std::size_t batch, std::size_t bands,
                                 std::size_t height, std::size_t width, std::size_t group_size);

// Inverse of spectral_tokenize, padding stripped.
std::vector<double> spectral_detokenize(const SpectralTokens& t);

struct SpectralParams {
  Linear embed;    // G -> D_spe
  SsmParams block; // over the N band-group tokens
  Linear out;      // D_spe -> D

  static SpectralParams init(std::size_t group_size, const SsmConfig& ssm, std::size_t d_out, Rng& rng);
  ParamList params() const;
};

// Scans every pixel's band groups; the final scan position is projected to
// the output width. Returns [B*H*W, D].
Tensor spectral_pass(const SpectralTokens& t, const SpectralParams& p);

enum class Fusion { kSum, kConcat };

struct FusionParams {
  Fusion mode = Fusion::kSum;
  LayerNorm norm;
  Linear proj;

  static FusionParams init(std::size_t d_model, Fusion mode, Rng& rng);
  ParamList params() const;
};

// kSum: proj(norm(a + b)); kConcat: proj(norm([a, b])).
Tensor fuse(const Tensor& y_spa, const Tensor& y_spe, const FusionParams& p);

}  // namespace cssm
