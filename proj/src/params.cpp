// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/params.hpp"

#include <cmath>

namespace cssm {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor fan_in_param(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_param({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

Tensor constant_param(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, v));
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = fan_in_param(in, out, rng);
  if (with_bias) l.bias = uniform_param({out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return l;
}

ParamList Linear::params(const std::string& prefix) const {
  ParamList p{{prefix + ".weight", weight}};
  if (bias.defined()) p.push_back({prefix + ".bias", bias});
  return p;
}

LayerNorm LayerNorm::init(std::size_t dim) {
  return {constant_param({dim}, 1.0), constant_param({dim}, 0.0)};
}

ParamList LayerNorm::params(const std::string& prefix) const {
  return {{prefix + ".gain", gain}, {prefix + ".bias", bias}};
}

}  // namespace cssm
