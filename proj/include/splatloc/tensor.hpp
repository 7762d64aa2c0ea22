// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "splatloc/common.hpp"

namespace splatloc {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<Scalar> value;
  // Empty until the node receives a gradient.
  std::vector<Scalar> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backward;

  std::vector<Scalar>& ensure_grad();
};

}  // namespace detail

/// Dense row-major N-d array with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same buffer and graph node.
/// Ops record a backward closure only when at least one input requires a
/// gradient and grad mode is enabled on the calling thread.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const Scalar> data() const;
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad();
  /// Allocates a zero gradient buffer.
  void zero_grad();
  /// Releases the gradient buffer; has_grad() becomes false.
  void clear_grad();

  /// Same values, no graph history, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of the values into a fresh leaf.
  Tensor clone() const;

  const char* op_name() const;

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Runs reverse-mode differentiation from a scalar loss. Gradients accumulate
/// into every reachable leaf that requires a gradient.
void backward(const Tensor& loss);

using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

// ---- Core ops -------------------------------------------------------------
// Shapes in brackets; "..." means any leading dimensions.

Tensor matmul(const Tensor& a, const Tensor& b);  // [n,k]x[k,m]
/// Batched product [B,n,k]x[B,k,m], or [B,n,k]x[B,m,k]^T when transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x[..., C] + bias[C] broadcast over leading dimensions.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, Scalar factor);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Scalar slope = 0.1);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma[C], beta[C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5);
/// x[Cin,H,W], weight[Cout,Cin,k,k], bias[Cout] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
/// Selects slices along axis 0; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
/// Picks x[i, j] for each pair; result has shape [pairs].
Tensor gather_elements(const Tensor& x, std::span<const std::pair<std::size_t, std::size_t>> pairs);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);     // [n,m] -> [m,n]
Tensor swap_leading(const Tensor& x);  // [a,b,...] -> [b,a,...]
/// Constant sparse matrix [n_out, n_in] times x[n_in, C].
Tensor sparse_mm(std::shared_ptr<const SparseMatrix> matrix, const Tensor& x);
/// Divides each row of x[n,C] by max(norm, eps).
Tensor normalize_rows(const Tensor& x, Scalar eps = 1e-12);
/// Euclidean norm of each row of x[n,C]; subgradient 0 at the origin.
Tensor row_norm(const Tensor& x);
/// log(max(x, floor)); zero gradient where clamped.
Tensor log_clamped(const Tensor& x, Scalar floor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace splatloc
