// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker shared by the unit tests and the
// acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cssm/params.hpp"
#include "cssm/tensor.hpp"

namespace cssm::testing {

struct GradReport {
  double worst = 0.0;  // max over checked tensors of the relative error
  std::string worst_name;
  std::size_t tensors = 0;
};

// Relative error ||a - n|| / max(||a||, ||n||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// `loss` must rebuild the graph from the current values of `inputs` and
// return a one-element tensor.
inline GradReport gradcheck(const std::function<Tensor()>& loss, ParamList inputs, double h = 1e-5) {
  for (auto& p : inputs) p.tensor.zero_grad();
  {
    Tape tape;
    tape.backward(loss());
  }
  GradReport rep;
  for (auto& p : inputs) {
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    std::vector<double> numeric(p.tensor.numel());
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      NoGradGuard no_grad;
      w[i] = keep + h;
      const double up = loss().item();
      w[i] = keep - h;
      const double down = loss().item();
      w[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    const double err = relative_error(analytic, numeric);
    if (err >= rep.worst) {
      rep.worst = err;
      rep.worst_name = p.name;
    }
    ++rep.tensors;
    p.tensor.zero_grad();
  }
  return rep;
}

inline std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Tensor random_leaf(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), normal_values(n, rng, sd));
}

// sum(y * r) with a fixed random r, so that every output entry matters.
inline Tensor probe(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

}  // namespace cssm::testing
