// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>
#include <Eigen/Dense>

namespace splatloc {
namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

thread_local bool t_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(
      fmt::format("{}: incompatible shapes {} and {}", op, shape_to_string(a), shape_to_string(b)));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const std::string& what) {
  throw ShapeError(fmt::format("{}: invalid shape {} ({})", op, shape_to_string(a), what));
}

const NodePtr& checked(const Tensor& t, const char* op) {
  if (!t.defined()) throw ArgumentError(fmt::format("{}: undefined tensor", op));
  return t.node();
}

NodePtr new_node(Shape shape, std::vector<Scalar> value, const char* op) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  return n;
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->node()->requires_grad) return true;
  }
  return false;
}

template <typename Fn>
Tensor finish(NodePtr out, std::initializer_list<const Tensor*> inputs, Fn&& fn) {
  if (any_requires_grad(inputs)) {
    out->requires_grad = true;
    for (const Tensor* t : inputs) {
      if (t->defined() && t->node()->requires_grad) {
        out->parents.push_back(t->node());
      }
    }
    out->backward = std::forward<Fn>(fn);
  }
  return Tensor(std::move(out));
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) { return product(shape, 0, shape.size()); }

std::vector<Scalar>& detail::TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<Scalar>(n, value), "leaf");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(fmt::format("from: shape {} needs {} values, got {}", shape_to_string(shape),
                                 shape_numel(shape), values.size()));
  }
  auto node = new_node(std::move(shape), std::move(values), "leaf");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Scalar value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  const Shape& s = shape();
  if (i >= s.size()) {
    throw ArgumentError(fmt::format("dim {} out of range for shape {}", i, shape_to_string(s)));
  }
  return s[i];
}

std::size_t Tensor::numel() const { return checked(*this, "numel")->value.size(); }

std::span<const Scalar> Tensor::data() const { return checked(*this, "data")->value; }

std::span<Scalar> Tensor::mutable_data() { return checked(*this, "mutable_data")->value; }

Scalar Tensor::item() const {
  if (numel() != 1) {
    throw ArgumentError(
        fmt::format("item: tensor of shape {} is not a scalar", shape_to_string(shape())));
  }
  return node_->value[0];
}

Scalar Tensor::at(std::size_t i, std::size_t j) const {
  const Shape& s = shape();
  if (s.size() != 2 || i >= s[0] || j >= s[1]) {
    throw ArgumentError(fmt::format("at({}, {}) invalid for shape {}", i, j, shape_to_string(s)));
  }
  return node_->value[i * s[1] + j];
}

bool Tensor::requires_grad() const { return checked(*this, "requires_grad")->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  checked(*this, "set_requires_grad")->requires_grad = value;
}

bool Tensor::has_grad() const {
  const auto& n = checked(*this, "has_grad");
  return !n->grad.empty() || n->value.empty();
}

std::span<const Scalar> Tensor::grad() const {
  const auto& n = checked(*this, "grad");
  if (n->grad.size() != n->value.size()) {
    throw StateError("grad: tensor has no gradient");
  }
  return n->grad;
}

std::span<Scalar> Tensor::mutable_grad() { return checked(*this, "mutable_grad")->ensure_grad(); }

void Tensor::zero_grad() { checked(*this, "zero_grad")->grad.assign(node_->value.size(), 0.0); }

void Tensor::clear_grad() {
  auto& g = checked(*this, "clear_grad")->grad;
  g.clear();
  g.shrink_to_fit();
}

Tensor Tensor::detach() const {
  const auto& n = checked(*this, "detach");
  return Tensor(new_node(n->shape, n->value, "detach"));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->op = "leaf";
  return t;
}

const char* Tensor::op_name() const { return checked(*this, "op_name")->op; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

void backward(const Tensor& loss) {
  const auto& root = checked(loss, "backward");
  if (root->value.size() != 1) {
    throw ArgumentError(
        fmt::format("backward: loss must be scalar, got shape {}", shape_to_string(root->shape)));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- Ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& an = checked(a, "matmul");
  const auto& bn = checked(b, "matmul");
  if (an->shape.size() != 2 || bn->shape.size() != 2 || an->shape[1] != bn->shape[0]) {
    shape_error("matmul", an->shape, bn->shape);
  }
  const auto n = an->shape[0], k = an->shape[1], m = bn->shape[1];
  std::vector<Scalar> out(n * m);
  MapMat(out.data(), n, m).noalias() =
      ConstMapMat(an->value.data(), n, k) * ConstMapMat(bn->value.data(), k, m);
  return finish(new_node({n, m}, std::move(out), "matmul"), {&a, &b},
                [an, bn, n, k, m](Node& self) {
                  ConstMapMat g(self.grad.data(), n, m);
                  if (an->requires_grad) {
                    MapMat(an->ensure_grad().data(), n, k).noalias() +=
                        g * ConstMapMat(bn->value.data(), k, m).transpose();
                  }
                  if (bn->requires_grad) {
                    MapMat(bn->ensure_grad().data(), k, m).noalias() +=
                        ConstMapMat(an->value.data(), n, k).transpose() * g;
                  }
                });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto& an = checked(a, "bmm");
  const auto& bn = checked(b, "bmm");
  if (an->shape.size() != 3 || bn->shape.size() != 3 || an->shape[0] != bn->shape[0]) {
    shape_error("bmm", an->shape, bn->shape);
  }
  const auto batch = an->shape[0], n = an->shape[1], k = an->shape[2];
  const auto br = bn->shape[1], bc = bn->shape[2];
  const auto m = transpose_b ? br : bc;
  if ((transpose_b ? bc : br) != k) shape_error("bmm", an->shape, bn->shape);
  std::vector<Scalar> out(batch * n * m);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMapMat ai(an->value.data() + i * n * k, n, k);
    ConstMapMat bi(bn->value.data() + i * br * bc, br, bc);
    MapMat oi(out.data() + i * n * m, n, m);
    if (transpose_b) {
      oi.noalias() = ai * bi.transpose();
    } else {
      oi.noalias() = ai * bi;
    }
  }
  return finish(new_node({batch, n, m}, std::move(out), "bmm"), {&a, &b},
                [an, bn, batch, n, k, m, br, bc, transpose_b](Node& self) {
                  for (std::size_t i = 0; i < batch; ++i) {
                    ConstMapMat g(self.grad.data() + i * n * m, n, m);
                    ConstMapMat ai(an->value.data() + i * n * k, n, k);
                    ConstMapMat bi(bn->value.data() + i * br * bc, br, bc);
                    if (an->requires_grad) {
                      MapMat ga(an->ensure_grad().data() + i * n * k, n, k);
                      if (transpose_b) {
                        ga.noalias() += g * bi;
                      } else {
                        ga.noalias() += g * bi.transpose();
                      }
                    }
                    if (bn->requires_grad) {
                      MapMat gb(bn->ensure_grad().data() + i * br * bc, br, bc);
                      if (transpose_b) {
                        gb.noalias() += g.transpose() * ai;
                      } else {
                        gb.noalias() += ai.transpose() * g;
                      }
                    }
                  }
                });
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a,
                          GradB grad_b) {
  const auto& an = checked(a, op);
  const auto& bn = checked(b, op);
  if (an->shape != bn->shape) shape_error(op, an->shape, bn->shape);
  std::vector<Scalar> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(an->value[i], bn->value[i]);
  }
  return finish(new_node(an->shape, std::move(out), op), {&a, &b},
                [an, bn, grad_a, grad_b](Node& self) {
                  const auto& g = self.grad;
                  if (an->requires_grad) {
                    auto& ga = an->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += g[i] * grad_a(an->value[i], bn->value[i]);
                    }
                  }
                  if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      gb[i] += g[i] * grad_b(an->value[i], bn->value[i]);
                    }
                  }
                });
}

template <typename Fwd, typename Grad>
Tensor unary_elementwise(const char* op, const Tensor& x, Fwd fwd, Grad grad) {
  const auto& xn = checked(x, op);
  std::vector<Scalar> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xn->value[i]);
  return finish(new_node(xn->shape, std::move(out), op), {&x}, [xn, grad](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * grad(xn->value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; }, [](Scalar, Scalar) { return 1.0; },
      [](Scalar, Scalar) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; }, [](Scalar, Scalar) { return 1.0; },
      [](Scalar, Scalar) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; }, [](Scalar, Scalar y) { return y; },
      [](Scalar x, Scalar) { return x; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const auto& xn = checked(x, "add_bias");
  const auto& bn = checked(bias, "add_bias");
  const std::size_t c = last_dim(xn->shape);
  if (xn->shape.empty() || bn->shape.size() != 1 || bn->shape[0] != c) {
    shape_error("add_bias", xn->shape, bn->shape);
  }
  std::vector<Scalar> out(xn->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bn->value[i % c];
  return finish(new_node(xn->shape, std::move(out), "add_bias"), {&x, &bias},
                [xn, bn, c](Node& self) {
                  const auto& g = self.grad;
                  if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
                  }
                });
}

Tensor scale(const Tensor& x, Scalar factor) {
  return unary_elementwise(
      "scale", x, [factor](Scalar v) { return v * factor; }, [factor](Scalar) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      "relu", x, [](Scalar v) { return v > 0.0 ? v : 0.0; },
      [](Scalar v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, Scalar slope) {
  return unary_elementwise(
      "leaky_relu", x, [slope](Scalar v) { return v > 0.0 ? v : slope * v; },
      [slope](Scalar v) { return v > 0.0 ? 1.0 : slope; });
}

Tensor log_clamped(const Tensor& x, Scalar floor) {
  return unary_elementwise(
      "log_clamped", x, [floor](Scalar v) { return std::log(std::max(v, floor)); },
      [floor](Scalar v) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& xn = checked(x, "softmax");
  const Shape& s = xn->shape;
  if (axis >= s.size()) shape_error("softmax", s, fmt::format("axis {}", axis));
  const std::size_t outer = product(s, 0, axis), len = s[axis],
                    inner = product(s, axis + 1, s.size());
  std::vector<Scalar> out(xn->value.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xn->value[base + l * inner]);
      Scalar total = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const Scalar e = std::exp(xn->value[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  auto node = new_node(s, std::move(out), "softmax");
  Node* raw = node.get();
  return finish(std::move(node), {&x}, [xn, raw, outer, len, inner](Node& self) {
    auto& gx = xn->ensure_grad();
    const auto& y = raw->value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Scalar dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) {
          dot += self.grad[base + l * inner] * y[base + l * inner];
        }
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = base + l * inner;
          gx[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const auto& xn = checked(x, "layer_norm");
  const auto& gn = checked(gamma, "layer_norm");
  const auto& bn = checked(beta, "layer_norm");
  const std::size_t c = last_dim(xn->shape);
  if (xn->shape.empty() || gn->shape != Shape{c} || bn->shape != Shape{c}) {
    shape_error("layer_norm", xn->shape, gn->shape);
  }
  const std::size_t rows = xn->value.size() / c;
  auto xhat = std::make_shared<std::vector<Scalar>>(xn->value.size());
  auto inv_std = std::make_shared<std::vector<Scalar>>(rows);
  std::vector<Scalar> out(xn->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = xn->value.data() + r * c;
    Scalar mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += xr[i];
    mu /= static_cast<Scalar>(c);
    Scalar var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<Scalar>(c);
    const Scalar is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < c; ++i) {
      const Scalar h = (xr[i] - mu) * is;
      (*xhat)[r * c + i] = h;
      out[r * c + i] = h * gn->value[i] + bn->value[i];
    }
  }
  return finish(new_node(xn->shape, std::move(out), "layer_norm"), {&x, &gamma, &beta},
                [xn, gn, bn, xhat, inv_std, rows, c](Node& self) {
                  const auto& g = self.grad;
                  if (gn->requires_grad || bn->requires_grad) {
                    auto& gg = gn->ensure_grad();
                    auto& gb = bn->ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < c; ++i) {
                        gg[i] += g[r * c + i] * (*xhat)[r * c + i];
                        gb[i] += g[r * c + i];
                      }
                    }
                  }
                  if (!xn->requires_grad) return;
                  auto& gx = xn->ensure_grad();
                  const Scalar inv_c = 1.0 / static_cast<Scalar>(c);
                  for (std::size_t r = 0; r < rows; ++r) {
                    Scalar mean_gh = 0.0, mean_ghh = 0.0;
                    for (std::size_t i = 0; i < c; ++i) {
                      const Scalar gh = g[r * c + i] * gn->value[i];
                      mean_gh += gh;
                      mean_ghh += gh * (*xhat)[r * c + i];
                    }
                    mean_gh *= inv_c;
                    mean_ghh *= inv_c;
                    for (std::size_t i = 0; i < c; ++i) {
                      const Scalar gh = g[r * c + i] * gn->value[i];
                      gx[r * c + i] +=
                          (*inv_std)[r] * (gh - mean_gh - (*xhat)[r * c + i] * mean_ghh);
                    }
                  }
                });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const auto& xn = checked(x, "conv2d");
  const auto& wn = checked(weight, "conv2d");
  if (xn->shape.size() != 3 || wn->shape.size() != 4 || wn->shape[1] != xn->shape[0] ||
      wn->shape[2] != wn->shape[3]) {
    shape_error("conv2d", xn->shape, wn->shape);
  }
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  const std::size_t cin = xn->shape[0], h = xn->shape[1], w = xn->shape[2];
  const std::size_t cout = wn->shape[0], k = wn->shape[2];
  if (h + 2 * padding < k || w + 2 * padding < k) {
    shape_error("conv2d", xn->shape, wn->shape);
  }
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (w + 2 * padding - k) / stride + 1;
  const std::size_t patch = cin * k * k, npix = ho * wo;
  if (bias.defined() && bias.shape() != Shape{cout}) {
    shape_error("conv2d", wn->shape, bias.shape());
  }

  // im2col: cols[(c*k + ky)*k + kx, oy*wo + ox]
  auto cols = std::make_shared<std::vector<Scalar>>(patch * npix, 0.0);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        Scalar* row = cols->data() + ((c * k + ky) * k + kx) * npix;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            row[oy * wo + ox] = xn->value[(c * h + iy) * w + ix];
          }
        }
      }
    }
  }
  std::vector<Scalar> out(cout * npix);
  MapMat om(out.data(), cout, npix);
  om.noalias() =
      ConstMapMat(wn->value.data(), cout, patch) * ConstMapMat(cols->data(), patch, npix);
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  if (bn) {
    for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bn->value[o];
  }
  return finish(
      new_node({cout, ho, wo}, std::move(out), "conv2d"), {&x, &weight, &bias},
      [xn, wn, bn, cols, cin, h, w, cout, k, ho, wo, patch, npix, stride, padding](Node& self) {
        ConstMapMat g(self.grad.data(), cout, npix);
        if (wn->requires_grad) {
          MapMat(wn->ensure_grad().data(), cout, patch).noalias() +=
              g * ConstMapMat(cols->data(), patch, npix).transpose();
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) gb[o] += g.row(o).sum();
        }
        if (!xn->requires_grad) return;
        RowMat gcols = ConstMapMat(wn->value.data(), cout, patch).transpose() * g;
        auto& gx = xn->ensure_grad();
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const Scalar* row = gcols.data() + ((c * k + ky) * k + kx) * npix;
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                  if (ix < 0 || ix >= static_cast<long>(w)) continue;
                  gx[(c * h + iy) * w + ix] += row[oy * wo + ox];
                }
              }
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  const auto& xn = checked(x, "max_pool2d");
  if (xn->shape.size() != 3 || kernel == 0 || stride == 0 || xn->shape[1] < kernel ||
      xn->shape[2] < kernel) {
    shape_error("max_pool2d", xn->shape, fmt::format("kernel {}", kernel));
  }
  const std::size_t c = xn->shape[0], h = xn->shape[1], w = xn->shape[2];
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  std::vector<Scalar> out(c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ch * h + oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = (ch * h + oy * stride + ky) * w + ox * stride + kx;
            if (xn->value[idx] > xn->value[best]) best = idx;
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        out[o] = xn->value[best];
        (*argmax)[o] = best;
      }
    }
  }
  return finish(new_node({c, ho, wo}, std::move(out), "max_pool2d"), {&x},
                [xn, argmax](Node& self) {
                  auto& gx = xn->ensure_grad();
                  for (std::size_t o = 0; o < argmax->size(); ++o) {
                    gx[(*argmax)[o]] += self.grad[o];
                  }
                });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const auto& xn = checked(x, "gather_rows");
  if (xn->shape.empty()) shape_error("gather_rows", xn->shape, "rank 0");
  const std::size_t rows = xn->shape[0];
  const std::size_t width = rows ? xn->value.size() / rows : 0;
  for (std::size_t idx : indices) {
    if (idx >= rows) {
      throw ShapeError(fmt::format("gather_rows: index {} out of range for shape {}", idx,
                                   shape_to_string(xn->shape)));
    }
  }
  Shape s = xn->shape;
  s[0] = indices.size();
  std::vector<Scalar> out(indices.size() * width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(xn->value.data() + indices[r] * width, width, out.data() + r * width);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  return finish(new_node(std::move(s), std::move(out), "gather_rows"), {&x},
                [xn, idx, width](Node& self) {
                  auto& gx = xn->ensure_grad();
                  for (std::size_t r = 0; r < idx->size(); ++r) {
                    const Scalar* g = self.grad.data() + r * width;
                    Scalar* dst = gx.data() + (*idx)[r] * width;
                    for (std::size_t i = 0; i < width; ++i) dst[i] += g[i];
                  }
                });
}

Tensor gather_elements(const Tensor& x,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  const auto& xn = checked(x, "gather_elements");
  if (xn->shape.size() != 2) shape_error("gather_elements", xn->shape, "rank != 2");
  const std::size_t n = xn->shape[0], m = xn->shape[1];
  auto flat = std::make_shared<std::vector<std::size_t>>();
  flat->reserve(pairs.size());
  std::vector<Scalar> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= m) {
      throw ShapeError(fmt::format("gather_elements: ({}, {}) out of range for {}", i, j,
                                   shape_to_string(xn->shape)));
    }
    flat->push_back(i * m + j);
    out.push_back(xn->value[i * m + j]);
  }
  return finish(new_node({pairs.size()}, std::move(out), "gather_elements"), {&x},
                [xn, flat](Node& self) {
                  auto& gx = xn->ensure_grad();
                  for (std::size_t r = 0; r < flat->size(); ++r) {
                    gx[(*flat)[r]] += self.grad[r];
                  }
                });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  const Shape& first = checked(parts[0], "concat")->shape;
  if (axis >= first.size()) shape_error("concat", first, fmt::format("axis {}", axis));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = checked(p, "concat")->shape;
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  const std::size_t out_block = out_shape[axis] * inner;
  std::vector<Scalar> out(outer * out_block);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.node()->value.data() + o * block, block, out.data() + o * out_block + offset);
    }
    offsets.push_back(offset);
    offset += block;
  }
  auto node = new_node(std::move(out_shape), std::move(out), "concat");
  const bool record = std::any_of(parts.begin(), parts.end(),
                                  [](const Tensor& p) { return p.node()->requires_grad; }) &&
                      t_grad_enabled;
  if (!record) return Tensor(std::move(node));
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  node->requires_grad = true;
  for (const auto& n : nodes) {
    if (n->requires_grad) node->parents.push_back(n);
  }
  node->backward = [nodes, offsets, outer, inner, out_block, axis](Node& self) {
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      const auto& pn = nodes[pi];
      if (!pn->requires_grad) continue;
      const std::size_t block = pn->shape[axis] * inner;
      auto& g = pn->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const Scalar* src = self.grad.data() + o * out_block + offsets[pi];
        for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
      }
    }
  };
  return Tensor(std::move(node));
}

Tensor reshape(const Tensor& x, Shape shape) {
  const auto& xn = checked(x, "reshape");
  if (shape_numel(shape) != xn->value.size()) shape_error("reshape", xn->shape, shape);
  return finish(new_node(std::move(shape), xn->value, "reshape"), {&x}, [xn](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  const auto& xn = checked(x, "transpose");
  if (xn->shape.size() != 2) shape_error("transpose", xn->shape, "rank != 2");
  const std::size_t n = xn->shape[0], m = xn->shape[1];
  std::vector<Scalar> out(n * m);
  MapMat(out.data(), m, n) = ConstMapMat(xn->value.data(), n, m).transpose();
  return finish(new_node({m, n}, std::move(out), "transpose"), {&x}, [xn, n, m](Node& self) {
    MapMat(xn->ensure_grad().data(), n, m) += ConstMapMat(self.grad.data(), m, n).transpose();
  });
}

Tensor swap_leading(const Tensor& x) {
  const auto& xn = checked(x, "swap_leading");
  if (xn->shape.size() < 2) shape_error("swap_leading", xn->shape, "rank < 2");
  const std::size_t a = xn->shape[0], b = xn->shape[1];
  const std::size_t inner = product(xn->shape, 2, xn->shape.size());
  Shape s = xn->shape;
  std::swap(s[0], s[1]);
  std::vector<Scalar> out(xn->value.size());
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      std::copy_n(xn->value.data() + (i * b + j) * inner, inner, out.data() + (j * a + i) * inner);
    }
  }
  return finish(new_node(std::move(s), std::move(out), "swap_leading"), {&x},
                [xn, a, b, inner](Node& self) {
                  auto& gx = xn->ensure_grad();
                  for (std::size_t i = 0; i < a; ++i) {
                    for (std::size_t j = 0; j < b; ++j) {
                      const Scalar* src = self.grad.data() + (j * a + i) * inner;
                      Scalar* dst = gx.data() + (i * b + j) * inner;
                      for (std::size_t q = 0; q < inner; ++q) dst[q] += src[q];
                    }
                  }
                });
}

Tensor sparse_mm(std::shared_ptr<const SparseMatrix> matrix, const Tensor& x) {
  const auto& xn = checked(x, "sparse_mm");
  if (!matrix) throw ArgumentError("sparse_mm: null matrix");
  if (xn->shape.size() != 2 || static_cast<std::size_t>(matrix->cols()) != xn->shape[0]) {
    shape_error(
        "sparse_mm",
        Shape{static_cast<std::size_t>(matrix->rows()), static_cast<std::size_t>(matrix->cols())},
        xn->shape);
  }
  const std::size_t nin = xn->shape[0], c = xn->shape[1];
  const std::size_t nout = static_cast<std::size_t>(matrix->rows());
  std::vector<Scalar> out(nout * c);
  MapMat(out.data(), nout, c).noalias() = (*matrix) * ConstMapMat(xn->value.data(), nin, c);
  return finish(new_node({nout, c}, std::move(out), "sparse_mm"), {&x},
                [xn, matrix, nin, nout, c](Node& self) {
                  MapMat(xn->ensure_grad().data(), nin, c).noalias() +=
                      matrix->transpose() * ConstMapMat(self.grad.data(), nout, c);
                });
}

Tensor normalize_rows(const Tensor& x, Scalar eps) {
  const auto& xn = checked(x, "normalize_rows");
  if (xn->shape.size() != 2) shape_error("normalize_rows", xn->shape, "rank != 2");
  const std::size_t n = xn->shape[0], c = xn->shape[1];
  auto norms = std::make_shared<std::vector<Scalar>>(n);
  std::vector<Scalar> out(xn->value.size());
  for (std::size_t r = 0; r < n; ++r) {
    Scalar s = 0.0;
    for (std::size_t i = 0; i < c; ++i) s += xn->value[r * c + i] * xn->value[r * c + i];
    const Scalar nr = std::max(std::sqrt(s), eps);
    (*norms)[r] = std::sqrt(s);
    for (std::size_t i = 0; i < c; ++i) out[r * c + i] = xn->value[r * c + i] / nr;
  }
  auto node = new_node(xn->shape, std::move(out), "normalize_rows");
  Node* raw = node.get();
  return finish(std::move(node), {&x}, [xn, raw, norms, n, c, eps](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t r = 0; r < n; ++r) {
      const Scalar* g = self.grad.data() + r * c;
      const Scalar* y = raw->value.data() + r * c;
      if ((*norms)[r] <= eps) {
        for (std::size_t i = 0; i < c; ++i) gx[r * c + i] += g[i] / eps;
        continue;
      }
      Scalar dot = 0.0;
      for (std::size_t i = 0; i < c; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < c; ++i) {
        gx[r * c + i] += (g[i] - y[i] * dot) / (*norms)[r];
      }
    }
  });
}

Tensor row_norm(const Tensor& x) {
  const auto& xn = checked(x, "row_norm");
  if (xn->shape.size() != 2) shape_error("row_norm", xn->shape, "rank != 2");
  const std::size_t n = xn->shape[0], c = xn->shape[1];
  std::vector<Scalar> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    Scalar s = 0.0;
    for (std::size_t i = 0; i < c; ++i) s += xn->value[r * c + i] * xn->value[r * c + i];
    out[r] = std::sqrt(s);
  }
  auto node = new_node({n}, std::move(out), "row_norm");
  Node* raw = node.get();
  return finish(std::move(node), {&x}, [xn, raw, n, c](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t r = 0; r < n; ++r) {
      const Scalar nr = raw->value[r];
      if (nr == 0.0) continue;
      for (std::size_t i = 0; i < c; ++i) {
        gx[r * c + i] += self.grad[r] * xn->value[r * c + i] / nr;
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto& xn = checked(x, "sum");
  const Scalar total = std::accumulate(xn->value.begin(), xn->value.end(), 0.0);
  return finish(new_node({}, {total}, "sum"), {&x}, [xn](Node& self) {
    auto& gx = xn->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto& xn = checked(x, "mean");
  if (xn->value.empty()) throw ArgumentError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<Scalar>(xn->value.size()));
}

}  // namespace splatloc
