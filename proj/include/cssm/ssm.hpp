// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Selective state-space (S6) block without the depthwise conv branch:
//
//   u     = silu(x W_in)                 z = x W_gate
//   delta = softplus(u W_dt_down W_dt_up + b_dt)
//   B_t   = u_t W_B,  C_t = u_t W_C,     A = -exp(log_a)
//   h_t   = exp(delta_t A) h_{t-1} + delta_t B_t u_t
//   y_t   = C_t h_t + d_skip u_t
//   out   = (y * silu(z)) W_out

#pragma once

#include <cstddef>

#include "cssm/params.hpp"

namespace cssm {

struct SsmConfig {
  std::size_t d_model = 128;
  std::size_t d_state = 16;
  std::size_t expand = 2;
  std::size_t dt_rank = 0;  // 0 selects ceil(d_model / 16)

  std::size_t d_inner() const { return expand * d_model; }
  std::size_t rank() const { return dt_rank ? dt_rank : (d_model + 15) / 16; }
};

struct SsmParams {
  SsmConfig cfg;
  Tensor in_x;     // [D, Di]
  Tensor in_z;     // [D, Di]
  Tensor dt_down;  // [Di, R]
  Tensor dt_up;    // [R, Di]
  Tensor dt_bias;  // [Di]
  Tensor b_proj;   // [Di, S]
  Tensor c_proj;   // [Di, S]
  Tensor log_a;    // [Di, S]
  Tensor d_skip;   // [Di]
  Tensor out;      // [Di, D]

  // log_a rows are log(1..S); dt_bias is the inverse softplus of a
  // log-uniform draw in [1e-2, 1e-1].
  static SsmParams init(const SsmConfig& cfg, Rng& rng);
  ParamList params(const std::string& prefix) const;
};

// x: [B, N, D] -> [B, N, D]. Throws ShapeError on N == 0 or width mismatch.
Tensor ssm_forward(const Tensor& x, const SsmParams& p);

// Same block evaluated with plain scalar loops, one step at a time. Values
// only; used to validate ssm_forward.
Tensor ssm_scan_oracle(const Tensor& x, const SsmParams& p);

}  // namespace cssm
