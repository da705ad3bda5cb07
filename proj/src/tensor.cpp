// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cssm {

using detail::Node;

namespace {

thread_local Tape* g_active_tape = nullptr;

std::vector<double>& acc(Node& n) {
  n.grad_buffer();
  return n.grad;
}

Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape* tape = Tape::active();
  bool needs = false;
  if (tape != nullptr) {
    for (const Tensor& p : parents) {
      if (p.defined() && p.requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

// Variadic form for ops with a runtime-sized parent list.
Tensor make_result_n(Shape shape, std::vector<double> value,
                     std::span<const Tensor> parents,
                     std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape* tape = Tape::active();
  bool needs = false;
  if (tape != nullptr) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

// Flat operand offsets for every output element under trailing-axis
// broadcasting.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia, ib;
  bool same = false;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t r = std::max(a.size(), b.size());
  bc.out.assign(r, 1);
  auto dim_of = [r](const Shape& s, std::size_t i) -> std::size_t {
    const std::size_t off = r - s.size();
    return i < off ? 1 : s[i - off];
  };
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = dim_of(a, i), db = dim_of(b, i);
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) +
                       " with " + shape_str(b));
    }
    bc.out[i] = std::max(da, db);
  }
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(r, 0);
    std::size_t acc_stride = 1;
    for (std::size_t i = r; i-- > 0;) {
      const std::size_t d = dim_of(s, i);
      st[i] = d == 1 ? 0 : acc_stride;
      acc_stride *= d;
    }
    return st;
  };
  const auto sa = strides(a), sb = strides(b);
  const std::size_t n = shape_numel(bc.out);
  bc.ia.resize(n);
  bc.ib.resize(n);
  std::vector<std::size_t> index(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    bc.ia[k] = oa;
    bc.ib[k] = ob;
    for (std::size_t i = r; i-- > 0;) {
      ++index[i];
      oa += sa[i];
      ob += sb[i];
      if (index[i] < bc.out[i]) break;
      oa -= sa[i] * index[i];
      ob -= sb[i] * index[i];
      index[i] = 0;
    }
  }
  return bc;
}

// f(a, b) -> value ; da(a, b) and db(a, b) are the local partials.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da,
              DB db) {
  require_defined(a, op);
  require_defined(b, op);
  auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
  const std::size_t n = shape_numel(bc->out);
  std::vector<double> out(n);
  const auto av = a.data(), bv = b.data();
  if (bc->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[bc->ia[i]], bv[bc->ib[i]]);
  }
  return make_result(bc->out, std::move(out), {a, b}, [bc, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    const std::size_t n = g.size();
    if (pa.requires_grad) {
      auto& ga = acc(pa);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = bc->same ? i : bc->ia[i];
        const std::size_t ib = bc->same ? i : bc->ib[i];
        ga[ia] += g[i] * da(pa.value[ia], pb.value[ib]);
      }
    }
    if (pb.requires_grad) {
      auto& gb = acc(pb);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = bc->same ? i : bc->ia[i];
        const std::size_t ib = bc->same ? i : bc->ib[i];
        gb[ib] += g[i] * db(pa.value[ia], pb.value[ib]);
      }
    }
  });
}

// f(x) -> y ; d(x, y) is dy/dx.
template <class F, class D>
Tensor unary(const Tensor& x, const char* op, F f, D d) {
  require_defined(x, op);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [d](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = acc(p);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      gp[i] += self.grad[i] * d(p.value[i], self.value[i]);
    }
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

// ---------------------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Node> n) { nodes_.push_back(std::move(n)); }

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward: tape already consumed; record a new forward pass");
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a single element, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward: loss is not connected to any parameter");
  consumed_ = true;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
  }
  for (auto& n : nodes_) {
    n->backward = nullptr;
    n->parents.clear();
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = acc(pa);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * pb.value[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = acc(pb);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const std::size_t k = w.dim(0);
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  Tensor flat = x.rank() == 2 ? x : reshape(x, {x.numel() / k, k});
  Tensor y = matmul(flat, w);
  if (bias.defined()) y = add(y, bias);
  return y.shape() == out_shape ? y : reshape(y, out_shape);
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus",
      [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (double& g : gp) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

namespace {

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_defined(x, "sum_axis");
  const AxisSplit sp = split_at(x.shape(), axis, "sum_axis");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < sp.n; ++j)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[(o * sp.n + j) * sp.inner + i];
  return make_result(std::move(out_shape), std::move(out), {x}, [sp](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t j = 0; j < sp.n; ++j)
        for (std::size_t i = 0; i < sp.inner; ++i)
          gp[(o * sp.n + j) * sp.inner + i] += self.grad[o * sp.inner + i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const AxisSplit sp = split_at(x.shape(), axis, "softmax");
  const auto xv = x.data();
  for (double v : xv) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = xv[base];
      for (std::size_t j = 1; j < sp.n; ++j) mx = std::max(mx, xv[base + j * sp.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        const double e = std::exp(xv[base + j * sp.inner] - mx);
        out[base + j * sp.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < sp.n; ++j) out[base + j * sp.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [sp](Node& self) {
    auto& gp = acc(*self.parents[0]);
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.n * sp.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < sp.n; ++j) {
          const std::size_t k = base + j * sp.inner;
          dot += g[k] * y[k];
        }
        for (std::size_t j = 0; j < sp.n; ++j) {
          const std::size_t k = base + j * sp.inner;
          gp[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layernorm");
  if (x.rank() < 1 || x.shape().back() < 1) throw ShapeError("layernorm: empty feature axis");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " vs features " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [d, rows, xhat, rstd](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto& g = self.grad;
    if (pg.requires_grad) {
      auto& gg = acc(pg);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
    }
    if (pb.requires_grad) {
      auto& gb = acc(pb);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
    if (px.requires_grad) {
      auto& gx = acc(px);
      std::vector<double> dxh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dxh[j] = g[r * d + j] * pg.value[j];
          m1 += dxh[j];
          m2 += dxh[j] * (*xhat)[r * d + j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          gx[r * d + j] += (*rstd)[r] * (dxh[j] - m1 - (*xhat)[r * d + j] * m2);
        }
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const char> mask) {
  require_defined(logits, "cross_entropy");
  if (logits.rank() != 2 || targets.size() != logits.dim(0) || mask.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto lv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * k, 0.0);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= k) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " outside [0," +
                       std::to_string(k) + ")");
    }
    ++count;
    const double* row = lv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lz = std::log(z) + mx;
    total += lz - row[targets[i]];
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - lz);
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<char> msk(mask.begin(), mask.end());
  return make_result({1}, {total * inv}, {logits},
                     [n, k, inv, probs, tgt = std::move(tgt), msk = std::move(msk)](Node& self) {
                       auto& gp = acc(*self.parents[0]);
                       const double g = self.grad[0] * inv;
                       for (std::size_t i = 0; i < n; ++i) {
                         if (!msk[i]) continue;
                         for (std::size_t j = 0; j < k; ++j) gp[i * k + j] += g * (*probs)[i * k + j];
                         gp[i * k + static_cast<std::size_t>(tgt[i])] -= g;
                       }
                     });
}

// ---------------------------------------------------------------------------

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  require_defined(x, "gather_rows");
  if (x.rank() < 1) throw ShapeError("gather_rows: scalar input");
  if (idx.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t rows = x.dim(0), width = x.numel() / rows;
  for (std::size_t i : idx) {
    if (i >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(i) + " outside [0," + std::to_string(rows) + ")");
    }
  }
  std::vector<double> out(idx.size() * width);
  const auto xv = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  Shape shape = x.shape();
  shape[0] = idx.size();
  std::vector<std::size_t> ids(idx.begin(), idx.end());
  return make_result(std::move(shape), std::move(out), {x}, [width, ids = std::move(ids)](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < width; ++j) gp[ids[r] * width + j] += self.grad[r * width + j];
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> idx, std::size_t rows) {
  require_defined(x, "scatter_rows");
  if (x.rank() < 1 || x.dim(0) != idx.size()) {
    throw ShapeError("scatter_rows: " + std::to_string(idx.size()) + " indices for input " + shape_str(x.shape()));
  }
  std::unordered_set<std::size_t> seen;
  for (std::size_t i : idx) {
    if (i >= rows) {
      throw IndexError("scatter_rows: index " + std::to_string(i) + " outside [0," + std::to_string(rows) + ")");
    }
    if (!seen.insert(i).second) throw ContractError("scatter_rows: duplicate target row " + std::to_string(i));
  }
  const std::size_t width = x.numel() / x.dim(0);
  std::vector<double> out(rows * width, 0.0);
  const auto xv = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(idx[r] * width));
  Shape shape = x.shape();
  shape[0] = rows;
  std::vector<std::size_t> ids(idx.begin(), idx.end());
  return make_result(std::move(shape), std::move(out), {x}, [width, ids = std::move(ids)](Node& self) {
    auto& gp = acc(*self.parents[0]);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < width; ++j) gp[r * width + j] += self.grad[ids[r] * width + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_rows");
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat_rows: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    rows += p.dim(0);
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  return make_result_n(std::move(shape), std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (!p.requires_grad) continue;
      auto& gp = acc(p);
      for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += self.grad[offsets[i] + j];
    }
  });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  require_defined(a, "concat_last");
  require_defined(b, "concat_last");
  if (a.rank() != b.rank() || a.rank() == 0 ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw ShapeError("concat_last: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t p = a.shape().back(), q = b.shape().back(), rows = a.numel() / p;
  std::vector<double> out(rows * (p + q));
  const auto av = a.data(), bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * p), p, out.begin() + static_cast<std::ptrdiff_t>(r * (p + q)));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * q), q, out.begin() + static_cast<std::ptrdiff_t>(r * (p + q) + p));
  }
  Shape shape = a.shape();
  shape.back() = p + q;
  return make_result(std::move(shape), std::move(out), {a, b}, [p, q, rows](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = acc(pa);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < p; ++j) ga[r * p + j] += self.grad[r * (p + q) + j];
    }
    if (pb.requires_grad) {
      auto& gb = acc(pb);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < q; ++j) gb[r * q + j] += self.grad[r * (p + q) + p + j];
    }
  });
}

// ---------------------------------------------------------------------------

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, const Tensor& d_skip) {
  for (const Tensor* t : {&u, &delta, &a, &b, &c, &d_skip}) require_defined(*t, "selective_scan");
  if (u.rank() != 3 || delta.shape() != u.shape() || a.rank() != 2 || b.rank() != 3 ||
      c.shape() != b.shape()) {
    throw ShapeError("selective_scan: u " + shape_str(u.shape()) + ", delta " + shape_str(delta.shape()) +
                     ", A " + shape_str(a.shape()) + ", B " + shape_str(b.shape()) + ", C " +
                     shape_str(c.shape()));
  }
  const std::size_t nb = u.dim(0), n = u.dim(1), di = u.dim(2), s = a.dim(1);
  if (a.dim(0) != di || b.dim(0) != nb || b.dim(1) != n || b.dim(2) != s || d_skip.numel() != di) {
    throw ShapeError("selective_scan: inconsistent state/feature sizes (A " + shape_str(a.shape()) +
                     ", B " + shape_str(b.shape()) + ", D " + shape_str(d_skip.shape()) + ")");
  }
  const auto uv = u.data(), dv = delta.data(), av = a.data(), bv = b.data(), cv = c.data(),
             sv = d_skip.data();
  std::vector<double> out(nb * n * di, 0.0);
  // Hidden state after every step, needed by the reverse sweep.
  auto hist = std::make_shared<std::vector<double>>(nb * n * di * s);
  std::vector<double> h(di * s);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t row = bi * n + t;
      for (std::size_t d = 0; d < di; ++d) {
        const double dt = dv[row * di + d];
        const double x = uv[row * di + d];
        double y = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
          double& hk = h[d * s + k];
          hk = std::exp(dt * av[d * s + k]) * hk + dt * bv[row * s + k] * x;
          y += cv[row * s + k] * hk;
        }
        out[row * di + d] = y + sv[d] * x;
      }
      std::copy(h.begin(), h.end(), hist->begin() + static_cast<std::ptrdiff_t>(row * di * s));
    }
  }
  return make_result({nb, n, di}, std::move(out), {u, delta, a, b, c, d_skip},
                     [nb, n, di, s, hist](Node& self) {
    Node& pu = *self.parents[0];
    Node& pd = *self.parents[1];
    Node& pa = *self.parents[2];
    Node& pbm = *self.parents[3];
    Node& pc = *self.parents[4];
    Node& ps = *self.parents[5];
    std::vector<double> gu(nb * n * di, 0.0), gd(nb * n * di, 0.0), ga(di * s, 0.0),
        gb(nb * n * s, 0.0), gc(nb * n * s, 0.0), gs(di, 0.0);
    std::vector<double> dh(di * s);
    const auto& g = self.grad;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t t = n; t-- > 0;) {
        const std::size_t row = bi * n + t;
        const double* h_now = hist->data() + row * di * s;
        const double* h_prev = t > 0 ? hist->data() + (row - 1) * di * s : nullptr;
        for (std::size_t d = 0; d < di; ++d) {
          const double gy = g[row * di + d];
          const double dt = pd.value[row * di + d];
          const double x = pu.value[row * di + d];
          gs[d] += gy * x;
          double gx = gy * ps.value[d];
          double gdt = 0.0;
          for (std::size_t k = 0; k < s; ++k) {
            const double bk = pbm.value[row * s + k];
            gc[row * s + k] += gy * h_now[d * s + k];
            double& dhk = dh[d * s + k];
            dhk += gy * pc.value[row * s + k];
            const double akk = pa.value[d * s + k];
            const double decay = std::exp(dt * akk);
            const double hp = h_prev ? h_prev[d * s + k] : 0.0;
            gdt += dhk * (akk * decay * hp + bk * x);
            ga[d * s + k] += dhk * dt * decay * hp;
            gb[row * s + k] += dhk * dt * x;
            gx += dhk * dt * bk;
            dhk *= decay;
          }
          gu[row * di + d] += gx;
          gd[row * di + d] += gdt;
        }
      }
    }
    auto flush = [](Node& p, const std::vector<double>& src) {
      if (!p.requires_grad) return;
      auto& dst = acc(p);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    flush(pu, gu);
    flush(pd, gd);
    flush(pa, ga);
    flush(pbm, gb);
    flush(pc, gc);
    flush(ps, gs);
  });
}

}  // namespace cssm
