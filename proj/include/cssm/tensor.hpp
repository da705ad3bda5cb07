// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor with define-by-run reverse-mode differentiation.
//
// Every op returns a new Tensor. When a Tape is active and at least one
// operand requires a gradient, the op records itself on that tape together
// with a closure that pushes the upstream gradient into its parents.
// Without an active tape the ops are plain value computations.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cssm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Lazily allocates the gradient buffer.
  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  // Leaf whose gradient is accumulated by backward().
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct write access, for optimizers and checkpoint restore. Never call
  // on a tensor that is still referenced by a live tape.
  std::span<double> mutable_data() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  double operator[](std::size_t flat) const { return node_->value[flat]; }

  // Same values, cut from any tape.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records operations while alive. Tapes nest: constructing one makes it the
// active tape of the current thread, destroying it restores the previous.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Reverse accumulation from a single-element loss. Nodes are visited in
  // exact reverse recording order. A tape can be consumed only once.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::shared_ptr<detail::Node> n);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

// Suspends recording for the current scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// x[..., k] * w[k, n] (+ bias[n]); leading axes are flattened.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// ---- elementwise ----------------------------------------------------------
// Binary ops broadcast with trailing-axis alignment: shapes are aligned from
// the last axis and each aligned pair must be equal or contain a 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

// ---- reductions / normalization -------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sum over one axis, keeping it with extent 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis; gain and bias have the last axis' extent.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);
// Mean of -log softmax(logits[i])[target[i]] over rows with mask[i] set.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const char> mask);

// ---- indexing -------------------------------------------------------------

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx);
// Places row i of x at row idx[i] of a zero [rows x D] tensor.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> idx,
                    std::size_t rows);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_last(const Tensor& a, const Tensor& b);

// ---- selective scan --------------------------------------------------------
// h_t = exp(delta_t * A) h_{t-1} + delta_t * B_t * u_t ;  y_t = C_t h_t + D u_t
// u, delta: [B, N, Di]; a: [Di, S]; b, c: [B, N, S]; d_skip: [Di].
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d_skip);

}  // namespace cssm
