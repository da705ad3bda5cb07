// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/spectral.hpp"

#include <string>

namespace cssm {

SpectralTokens spectral_tokenize(std::span<const double> cube, std::size_t batch, std::size_t bands,
                                 std::size_t height, std::size_t width, std::size_t group_size) {
  if (group_size == 0 || group_size > bands) {
    throw ConfigError("spectral_tokenize: group size " + std::to_string(group_size) + " invalid for " +
                      std::to_string(bands) + " bands");
  }
  if (cube.size() != batch * bands * height * width) {
    throw ShapeError("spectral_tokenize: cube has " + std::to_string(cube.size()) + " values");
  }
  SpectralTokens t;
  t.batch = batch;
  t.bands = bands;
  t.height = height;
  t.width = width;
  t.group_size = group_size;
  t.groups = (bands + group_size - 1) / group_size;
  const std::size_t hw = height * width, span_len = t.groups * group_size;
  t.values.assign(t.pixels() * span_len, 0.0);
  t.mask.assign(span_len, 0.0);
  for (std::size_t c = 0; c < bands; ++c) t.mask[c] = 1.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < bands; ++c)
      for (std::size_t p = 0; p < hw; ++p) t.values[(b * hw + p) * span_len + c] = cube[(b * bands + c) * hw + p];
  return t;
}

std::vector<double> spectral_detokenize(const SpectralTokens& t) {
  const std::size_t hw = t.height * t.width, span_len = t.groups * t.group_size;
  std::vector<double> cube(t.batch * t.bands * hw);
  for (std::size_t b = 0; b < t.batch; ++b)
    for (std::size_t c = 0; c < t.bands; ++c)
      for (std::size_t p = 0; p < hw; ++p) cube[(b * t.bands + c) * hw + p] = t.values[(b * hw + p) * span_len + c];
  return cube;
}

SpectralParams SpectralParams::init(std::size_t group_size, const SsmConfig& ssm, std::size_t d_out, Rng& rng) {
  return {Linear::init(group_size, ssm.d_model, rng), SsmParams::init(ssm, rng),
          Linear::init(ssm.d_model, d_out, rng)};
}

ParamList SpectralParams::params() const {
  ParamList out = embed.params("spectral.embed");
  append_params(out, block.params("spectral.block"));
  append_params(out, this->out.params("spectral.out"));
  return out;
}

Tensor spectral_pass(const SpectralTokens& t, const SpectralParams& p) {
  const std::size_t np = t.pixels(), n = t.groups, g = t.group_size;
  const Tensor mask = Tensor::from({n, g}, t.mask);
  const Tensor tokens = mul(Tensor::from({np, n, g}, t.values), mask);
  const Tensor y = ssm_forward(p.embed(tokens), p.block);  // [P, N, Ds]
  std::vector<std::size_t> last(np);
  for (std::size_t i = 0; i < np; ++i) last[i] = i * n + n - 1;
  const std::size_t ds = p.block.cfg.d_model;
  return p.out(gather_rows(reshape(y, {np * n, ds}), last));
}

FusionParams FusionParams::init(std::size_t d_model, Fusion mode, Rng& rng) {
  const std::size_t width = mode == Fusion::kSum ? d_model : 2 * d_model;
  return {mode, LayerNorm::init(width), Linear::init(width, d_model, rng)};
}

ParamList FusionParams::params() const {
  ParamList out = norm.params("fusion.norm");
  append_params(out, proj.params("fusion.proj"));
  return out;
}

Tensor fuse(const Tensor& y_spa, const Tensor& y_spe, const FusionParams& p) {
  if (!y_spa.defined() || !y_spe.defined() || y_spa.shape() != y_spe.shape()) {
    throw ContractError("fuse: branch shapes " + (y_spa.defined() ? shape_str(y_spa.shape()) : "undefined") +
                        " and " + (y_spe.defined() ? shape_str(y_spe.shape()) : "undefined") + " differ");
  }
  const Tensor joined = p.mode == Fusion::kSum ? add(y_spa, y_spe) : concat_last(y_spa, y_spe);
  return p.proj(p.norm(joined));
}

}  // namespace cssm
