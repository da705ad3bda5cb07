// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full spatial-spectral network:
//
//   pixels -> linear embed -> layer norm -> cluster-guided spatial branch ─┐
//   pixels -> band-group tokens -> spectral SSM -> last position ──────────┴> fuse -> head

#pragma once

#include <cstddef>
#include <span>

#include "cssm/data.hpp"
#include "cssm/spatial.hpp"
#include "cssm/spectral.hpp"

namespace cssm {

struct ModelConfig {
  std::size_t bands = 0;
  std::size_t num_classes = 0;
  std::size_t hidden = 128;
  std::size_t state_dim = 16;
  std::size_t expand = 2;
  std::size_t attn_dim = 16;
  std::size_t group_size = 16;
  std::size_t clusters_per_class = 3;
  double keep_ratio = 1.0;
  bool use_attention = true;
  Fusion fusion = Fusion::kSum;

  std::size_t num_clusters() const { return num_classes * clusters_per_class; }
  SsmConfig ssm() const { return {hidden, state_dim, expand, 0}; }
  SpatialConfig spatial() const { return {num_clusters(), ssm(), attn_dim, keep_ratio, use_attention}; }
  void validate() const;
};

// Inputs derived once from a cube (batch of one image).
struct ModelInput {
  std::size_t height = 0, width = 0;
  Tensor pixels;             // [1, L, C]
  SpectralTokens spectral;

  static ModelInput from_cube(const HsiCube& cube, std::size_t group_size);
  std::size_t tokens() const { return height * width; }
};

struct ModelOutput {
  Tensor spatial;  // [1, L, D], spatial branch output before fusion
  Tensor logits;   // [L, num_classes]
};

class CssMamba {
 public:
  CssMamba(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }

  // Spatial branch only; this is the representation the clustering tracks.
  Tensor spatial_features(const ModelInput& in, std::span<const int> map, std::span<const double> prior) const;
  ModelOutput forward(const ModelInput& in, std::span<const int> map, std::span<const double> prior) const;

  // Stable order; names are unique.
  ParamList params() const;

 private:
  ModelConfig cfg_;
  Linear embed_;
  LayerNorm embed_norm_;
  SpatialParams spatial_;
  SpectralParams spectral_;
  FusionParams fusion_;
  Linear head_;
};

}  // namespace cssm
