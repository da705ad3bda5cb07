// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/model.hpp"

#include <string>

namespace cssm {

void ModelConfig::validate() const {
  if (bands == 0 || num_classes == 0) throw ConfigError("model: bands and classes must be positive");
  if (hidden == 0 || state_dim == 0 || expand == 0 || attn_dim == 0) {
    throw ConfigError("model: hidden, state_dim, expand and attn_dim must be positive");
  }
  if (group_size == 0 || group_size > bands) {
    throw ConfigError("model: group_size " + std::to_string(group_size) + " must lie in [1, " +
                      std::to_string(bands) + "]");
  }
  if (clusters_per_class == 0) throw ConfigError("model: clusters_per_class must be positive");
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("model: keep_ratio must lie in (0,1]");
}

ModelInput ModelInput::from_cube(const HsiCube& cube, std::size_t group_size) {
  ModelInput in;
  in.height = cube.height;
  in.width = cube.width;
  const std::size_t l = cube.pixels(), c = cube.bands;
  std::vector<double> px(l * c);
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t p = 0; p < l; ++p) px[p * c + b] = cube.data[b * l + p];
  in.pixels = Tensor::from({1, l, c}, std::move(px));
  in.spectral = spectral_tokenize(cube.data, 1, c, cube.height, cube.width, group_size);
  return in;
}

CssMamba::CssMamba(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  embed_ = Linear::init(cfg.bands, cfg.hidden, rng);
  embed_norm_ = LayerNorm::init(cfg.hidden);
  spatial_ = SpatialParams::init(cfg.spatial(), rng);
  spectral_ = SpectralParams::init(cfg.group_size, cfg.ssm(), cfg.hidden, rng);
  fusion_ = FusionParams::init(cfg.hidden, cfg.fusion, rng);
  // Zero head: uniform class posteriors until the first update.
  head_ = Linear::init(cfg.hidden, cfg.num_classes, rng);
  for (double& w : head_.weight.mutable_data()) w = 0.0;
  for (double& b : head_.bias.mutable_data()) b = 0.0;
}

Tensor CssMamba::spatial_features(const ModelInput& in, std::span<const int> map,
                                  std::span<const double> prior) const {
  const Tensor tokens = embed_norm_(embed_(in.pixels));
  return spatial_forward(tokens, map, prior, spatial_, cfg_.spatial());
}

ModelOutput CssMamba::forward(const ModelInput& in, std::span<const int> map, std::span<const double> prior) const {
  ModelOutput out;
  out.spatial = spatial_features(in, map, prior);
  const Tensor spectral = reshape(spectral_pass(in.spectral, spectral_), {1, in.tokens(), cfg_.hidden});
  const Tensor fused = fuse(out.spatial, spectral, fusion_);
  out.logits = head_(reshape(fused, {in.tokens(), cfg_.hidden}));
  return out;
}

ParamList CssMamba::params() const {
  ParamList out = embed_.params("embed");
  append_params(out, embed_norm_.params("embed_norm"));
  append_params(out, spatial_.params());
  append_params(out, spectral_.params());
  append_params(out, fusion_.params());
  append_params(out, head_.params("head"));
  return out;
}

}  // namespace cssm
