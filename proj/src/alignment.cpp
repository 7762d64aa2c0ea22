// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/alignment.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "splatloc/layers.hpp"

namespace splatloc {
namespace {

const Tensor& w(const ModelParams& p, const std::string& prefix, const char* what) {
  return p.get(prefix + "." + what);
}

Tensor norm(const Tensor& x, const ModelParams& p, const std::string& prefix) {
  return layer_norm(x, w(p, prefix, "gamma"), w(p, prefix, "beta"));
}

Tensor feed_forward(const Tensor& x, const ModelParams& p, const std::string& prefix) {
  return linear(relu(linear(x, p, prefix + ".ff1")), p, prefix + ".ff2");
}

void add_norm(ModelParams& p, const std::string& prefix, std::size_t dim) {
  p.add_constant(prefix + ".gamma", {dim}, 1.0);
  p.add_constant(prefix + ".beta", {dim}, 0.0);
}

}  // namespace

void init_attention_block(ModelParams& params, const std::string& prefix, std::size_t dim,
                          std::size_t ff_mult, std::mt19937_64& rng) {
  for (const char* m : {"wq", "wk", "wv", "wo"})
    init_linear(params, prefix + "." + m, dim, dim, rng);
  add_norm(params, prefix + ".ln1", dim);
  init_linear(params, prefix + ".ff1", dim, dim * ff_mult, rng, 2.0);
  init_linear(params, prefix + ".ff2", dim * ff_mult, dim, rng);
  add_norm(params, prefix + ".ln2", dim);
}

AttentionOutput attention_block(const Tensor& queries, const Tensor& context,
                                const ModelParams& params, const std::string& prefix,
                                std::size_t heads) {
  if (queries.rank() != 2 || context.rank() != 2 || queries.dim(1) != context.dim(1)) {
    throw ShapeError(fmt::format("attention {}: queries {} vs context {}", prefix,
                                 shape_to_string(queries.shape()),
                                 shape_to_string(context.shape())));
  }
  const std::size_t dim = queries.dim(1);
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(fmt::format("attention: {} heads do not divide dimension {}", heads, dim));
  }
  const std::size_t nq = queries.dim(0), nk = context.dim(0), d = dim / heads;
  auto split = [&](const Tensor& x, std::size_t n) {
    return swap_leading(reshape(x, {n, heads, d}));  // [heads, n, d]
  };
  Tensor q = split(linear(queries, params, prefix + ".wq"), nq);
  Tensor k = split(linear(context, params, prefix + ".wk"), nk);
  Tensor v = split(linear(context, params, prefix + ".wv"), nk);
  Tensor attn = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(d))), 2);
  Tensor mixed = reshape(swap_leading(bmm(attn, v)), {nq, dim});
  Tensor x1 = norm(add(queries, linear(mixed, params, prefix + ".wo")), params, prefix + ".ln1");
  Tensor out = norm(add(x1, feed_forward(x1, params, prefix)), params, prefix + ".ln2");
  return {out, attn};
}

AttentionOutput batched_self_attention(const Tensor& tokens, const ModelParams& params,
                                       const std::string& prefix) {
  if (tokens.rank() != 3) {
    throw ShapeError(fmt::format("batched attention {}: expected [B,N,C], got {}", prefix,
                                 shape_to_string(tokens.shape())));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(tokens.dim(2)));
  Tensor q = linear(tokens, params, prefix + ".wq");
  Tensor k = linear(tokens, params, prefix + ".wk");
  Tensor v = linear(tokens, params, prefix + ".wv");
  Tensor attn = softmax(scale(bmm(q, k, true), inv), 2);
  Tensor x1 =
      norm(add(tokens, linear(bmm(attn, v), params, prefix + ".wo")), params, prefix + ".ln1");
  Tensor out = norm(add(x1, feed_forward(x1, params, prefix)), params, prefix + ".ln2");
  return {out, attn};
}

Tensor sinusoidal_encoding(const Eigen::MatrixXd& unit_coords, std::size_t dim) {
  const std::size_t n = static_cast<std::size_t>(unit_coords.rows());
  const std::size_t axes = static_cast<std::size_t>(unit_coords.cols());
  const std::size_t freqs = dim / (2 * axes);
  std::vector<double> v(n * dim, 0.0);
  for (std::size_t f = 0; f < freqs; ++f) {
    const double t = freqs > 1 ? static_cast<double>(f) / static_cast<double>(freqs - 1) : 0.0;
    const double omega = std::numbers::pi * std::pow(64.0, t);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < axes; ++a) {
        const double phase =
            omega * unit_coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
        const std::size_t col = (a * freqs + f) * 2;
        v[i * dim + col] = std::sin(phase);
        v[i * dim + col + 1] = std::cos(phase);
      }
    }
  }
  return Tensor::from({n, dim}, std::move(v));
}

Tensor patch_positional_encoding(const PatchGrid& grid, std::size_t dim) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(grid.size()), 2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec2 p = grid.patch_center(i);
    c(static_cast<Eigen::Index>(i), 0) = p.x() / static_cast<double>(grid.width);
    c(static_cast<Eigen::Index>(i), 1) = p.y() / static_cast<double>(grid.height);
  }
  return sinusoidal_encoding(c, dim);
}

Tensor point_positional_encoding(const Eigen::MatrixX3d& points, std::size_t dim) {
  Eigen::MatrixXd c(points.rows(), 3);
  const Eigen::RowVector3d lo = points.colwise().minCoeff(), hi = points.colwise().maxCoeff();
  for (int a = 0; a < 3; ++a) {
    const double span = hi[a] - lo[a];
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      c(i, a) = span > 0.0 ? (points(i, a) - lo[a]) / span : 0.5;
    }
  }
  return sinusoidal_encoding(c, dim);
}

AlignedFeatures align(const Tensor& scene_features, const Eigen::MatrixX3d& scene_points,
                      const Tensor& image_features, const PatchGrid& grid,
                      const ModelParams& params, const AlignmentConfig& config) {
  const std::size_t dim = scene_features.dim(1);
  if (image_features.dim(1) != dim) {
    throw ShapeError(fmt::format("align: scene {} vs image {}",
                                 shape_to_string(scene_features.shape()),
                                 shape_to_string(image_features.shape())));
  }
  if (image_features.dim(0) != grid.size() ||
      scene_features.dim(0) != static_cast<std::size_t>(scene_points.rows())) {
    throw ShapeError("align: feature rows do not match their anchors");
  }
  Tensor scene = add(scene_features, point_positional_encoding(scene_points, dim));
  Tensor image = add(image_features, patch_positional_encoding(grid, dim));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = fmt::format("align.layer{}.", l + 1);
    scene = attention_block(scene, scene, params, p + "self3d", config.heads).output;
    image = attention_block(image, image, params, p + "self2d", config.heads).output;
    scene = attention_block(scene, image, params, p + "cross3d", config.heads).output;
    image = attention_block(image, scene, params, p + "cross2d", config.heads).output;
  }
  return {scene, image};
}

void init_alignment(ModelParams& params, const AlignmentConfig& config, std::size_t dim,
                    std::mt19937_64& rng) {
  if (config.heads == 0 || dim % config.heads != 0) {
    throw ConfigError(
        fmt::format("alignment: {} heads do not divide dimension {}", config.heads, dim));
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (const char* kind : {"self3d", "self2d", "cross3d", "cross2d"}) {
      init_attention_block(params, fmt::format("align.layer{}.{}", l + 1, kind), dim,
                           config.ff_mult, rng);
    }
  }
}

}  // namespace splatloc
