// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include <Eigen/Core>

#include "splatloc/params.hpp"
#include "splatloc/patch_grid.hpp"
#include "splatloc/tensor.hpp"

namespace splatloc {

struct AlignmentConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ff_mult = 2;
};

struct AttentionOutput {
  Tensor output;
  Tensor weights;  // [heads, Nq, Nk] (or [B, Nq, Nk] for the batched form)
};

/// Registers the weights of one attention block under `prefix`:
/// {wq,wk,wv,wo}.{weight,bias}, ln1/ln2 {gamma,beta}, ff1/ff2 {weight,bias}.
void init_attention_block(ModelParams& params, const std::string& prefix, std::size_t dim,
                          std::size_t ff_mult, std::mt19937_64& rng);

/// Post-norm transformer block: x1 = LN(x + MHA(x, context)),
/// out = LN(x1 + FF(x1)). queries [Nq, C], context [Nk, C].
AttentionOutput attention_block(const Tensor& queries, const Tensor& context,
                                const ModelParams& params, const std::string& prefix,
                                std::size_t heads);

/// Single-head variant over independent token sets: tokens [B, N, C].
AttentionOutput batched_self_attention(const Tensor& tokens, const ModelParams& params,
                                       const std::string& prefix);

/// Sinusoidal encodings of points already normalized to [0, 1] per axis:
/// each axis gets floor(dim / (2 * axes)) frequencies (sin and cos), spread
/// geometrically from pi to 64 pi; remaining columns are zero.
Tensor sinusoidal_encoding(const Eigen::MatrixXd& unit_coords, std::size_t dim);
/// Patch centers divided by image size.
Tensor patch_positional_encoding(const PatchGrid& grid, std::size_t dim);
/// Min-max normalized 3D coordinates (constant axes map to 0.5).
Tensor point_positional_encoding(const Eigen::MatrixX3d& points, std::size_t dim);

struct AlignedFeatures {
  Tensor scene;  // [N_g, C]
  Tensor image;  // [N_c, C]
};

/// Adds positional encodings, then per layer: self(scene), self(image),
/// cross(scene <- image), cross(image <- scene).
AlignedFeatures align(const Tensor& scene_features, const Eigen::MatrixX3d& scene_points,
                      const Tensor& image_features, const PatchGrid& grid,
                      const ModelParams& params, const AlignmentConfig& config);

/// Registers align.layer{l}.{self3d,self2d,cross3d,cross2d}.*.
void init_alignment(ModelParams& params, const AlignmentConfig& config, std::size_t dim,
                    std::mt19937_64& rng);

}  // namespace splatloc
