// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cssm/tensor.hpp"

namespace cssm {

using Rng = std::mt19937_64;

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

inline void append_params(ParamList& dst, const ParamList& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// Uniform(-bound, bound) leaf.
Tensor uniform_param(Shape shape, double bound, Rng& rng);
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a [fan_in, fan_out] weight.
Tensor fan_in_param(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor constant_param(Shape shape, double v);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  ParamList params(const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layernorm(x, gain, bias); }
  ParamList params(const std::string& prefix) const;
};

}  // namespace cssm
