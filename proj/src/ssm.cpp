// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/ssm.hpp"

#include <cmath>

namespace cssm {

SsmParams SsmParams::init(const SsmConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model, di = cfg.d_inner(), s = cfg.d_state, r = cfg.rank();
  SsmParams p;
  p.cfg = cfg;
  p.in_x = fan_in_param(d, di, rng);
  p.in_z = fan_in_param(d, di, rng);
  p.dt_down = fan_in_param(di, r, rng);
  p.dt_up = fan_in_param(r, di, rng);
  p.b_proj = fan_in_param(di, s, rng);
  p.c_proj = fan_in_param(di, s, rng);
  p.out = fan_in_param(di, d, rng);

  std::uniform_real_distribution<double> log_dt(std::log(1e-2), std::log(1e-1));
  std::vector<double> bias(di);
  for (double& b : bias) {
    const double dt = std::exp(log_dt(rng));
    b = dt + std::log(-std::expm1(-dt));
  }
  p.dt_bias = Tensor::parameter({di}, std::move(bias));

  std::vector<double> la(di * s);
  for (std::size_t i = 0; i < di; ++i)
    for (std::size_t k = 0; k < s; ++k) la[i * s + k] = std::log(static_cast<double>(k + 1));
  p.log_a = Tensor::parameter({di, s}, std::move(la));
  p.d_skip = constant_param({di}, 1.0);
  return p;
}

ParamList SsmParams::params(const std::string& prefix) const {
  return {{prefix + ".in_x", in_x},     {prefix + ".in_z", in_z},       {prefix + ".dt_down", dt_down},
          {prefix + ".dt_up", dt_up},   {prefix + ".dt_bias", dt_bias}, {prefix + ".b_proj", b_proj},
          {prefix + ".c_proj", c_proj}, {prefix + ".log_a", log_a},     {prefix + ".d_skip", d_skip},
          {prefix + ".out", out}};
}

namespace {

void check_input(const Tensor& x, const SsmParams& p) {
  if (!x.defined() || x.rank() != 3 || x.dim(2) != p.cfg.d_model) {
    throw ShapeError("ssm: expected [B, N, " + std::to_string(p.cfg.d_model) + "] input, got " +
                     (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
}

}  // namespace

Tensor ssm_forward(const Tensor& x, const SsmParams& p) {
  check_input(x, p);
  const Tensor u = silu(linear(x, p.in_x));
  const Tensor z = linear(x, p.in_z);
  const Tensor delta = softplus(linear(linear(u, p.dt_down), p.dt_up, p.dt_bias));
  const Tensor bm = linear(u, p.b_proj);
  const Tensor cm = linear(u, p.c_proj);
  const Tensor a = scale(exp(p.log_a), -1.0);
  const Tensor y = selective_scan(u, delta, a, bm, cm, p.d_skip);
  return linear(mul(y, silu(z)), p.out);
}

Tensor ssm_scan_oracle(const Tensor& x, const SsmParams& p) {
  check_input(x, p);
  const std::size_t nb = x.dim(0), n = x.dim(1), d = p.cfg.d_model, di = p.cfg.d_inner(),
                    s = p.cfg.d_state, r = p.cfg.rank();
  const auto W = [](const Tensor& t, std::size_t i, std::size_t j) { return t[i * t.dim(1) + j]; };
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const auto sp = [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); };

  std::vector<double> out(nb * n * d, 0.0);
  std::vector<double> u(di), z(di), low(r), dt(di), bt(s), ct(s), y(di), h(di * s);
  for (std::size_t b = 0; b < nb; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double* xt = x.data().data() + (b * n + t) * d;
      for (std::size_t i = 0; i < di; ++i) {
        double su = 0.0, sz = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          su += xt[k] * W(p.in_x, k, i);
          sz += xt[k] * W(p.in_z, k, i);
        }
        u[i] = su * sig(su);
        z[i] = sz;
      }
      for (std::size_t j = 0; j < r; ++j) {
        low[j] = 0.0;
        for (std::size_t i = 0; i < di; ++i) low[j] += u[i] * W(p.dt_down, i, j);
      }
      for (std::size_t i = 0; i < di; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < r; ++j) v += low[j] * W(p.dt_up, j, i);
        dt[i] = sp(v + p.dt_bias[i]);
      }
      for (std::size_t k = 0; k < s; ++k) {
        bt[k] = 0.0;
        ct[k] = 0.0;
        for (std::size_t i = 0; i < di; ++i) {
          bt[k] += u[i] * W(p.b_proj, i, k);
          ct[k] += u[i] * W(p.c_proj, i, k);
        }
      }
      for (std::size_t i = 0; i < di; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
          const double a = -std::exp(W(p.log_a, i, k));
          double& hk = h[i * s + k];
          hk = std::exp(dt[i] * a) * hk + dt[i] * bt[k] * u[i];
          acc += ct[k] * hk;
        }
        y[i] = (acc + p.d_skip[i] * u[i]) * (z[i] * sig(z[i]));
      }
      double* ot = out.data() + (b * n + t) * d;
      for (std::size_t i = 0; i < di; ++i)
        for (std::size_t k = 0; k < d; ++k) ot[k] += y[i] * W(p.out, i, k);
    }
  }
  return Tensor::from({nb, n, d}, std::move(out));
}

}  // namespace cssm
