// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "splatloc/params.hpp"
#include "splatloc/scene_io.hpp"
#include "splatloc/tensor.hpp"

namespace splatloc {

struct Encoder3dConfig {
  std::vector<std::size_t> channels{16, 32, 64};
  /// Voxel side of the first downsampling; <= 0 selects bbox diagonal / cell_divisor.
  double base_cell = 0.0;
  double cell_divisor = 256.0;
  /// Neighbor radius as a multiple of the current stage's cell.
  double radius_scale = 2.5;
  std::size_t input_dim = kGaussianFeatureDim;

  std::size_t output_dim() const { return channels.back(); }
};

/// Voxel-grid pooling structure: one output per occupied voxel, ordered by
/// voxel key so the result does not depend on input order.
struct GridPooling {
  Eigen::MatrixX3d centroids;
  std::vector<std::size_t> assignment;  // input row -> output row
  /// [outputs x inputs] averaging matrix.
  std::shared_ptr<const SparseMatrix> pool;
};

GridPooling grid_pooling(const Eigen::MatrixX3d& points, double cell);

struct Downsampled {
  Eigen::MatrixX3d points;
  Tensor features;
  std::vector<std::size_t> assignment;
};

/// Mean-pools positions and features per occupied voxel of side `cell`.
Downsampled grid_downsample(const Eigen::MatrixX3d& points, const Tensor& features, double cell);

/// Rigid kernel: one point at the origin plus 14 on a sphere of radius
/// `sigma` (a minimum-energy arrangement).
Eigen::MatrixX3d default_kernel_points(double sigma);

struct KernelGeometry {
  Eigen::MatrixX3d points;  // K x 3 offsets
  double sigma = 1.0;       // linear influence extent
};

/// Constant correlation operator [N*K x N] with entry (p*K + k, q) equal to
/// max(0, 1 - |(q - p) - kernel_k| / sigma) for neighbors |q - p| <= radius.
std::shared_ptr<const SparseMatrix> kpconv_operator(const Eigen::MatrixX3d& points, double radius,
                                                    const KernelGeometry& kernel);

/// KPConv with linear influence: weight [K, Cin, Cout], bias [Cout], then
/// leaky ReLU(0.1). A point with no kernel support gets a zero pre-activation
/// before the bias.
Tensor kpconv_layer(const Tensor& features, std::shared_ptr<const SparseMatrix> op,
                    const Tensor& weight, const Tensor& bias);
Tensor kpconv_layer(const Eigen::MatrixX3d& points, const Tensor& features, double radius,
                    const KernelGeometry& kernel, const Tensor& weight, const Tensor& bias);

/// Geometry-only part of the scene encoder, reusable across training steps.
struct ScenePlan {
  struct Stage {
    Eigen::MatrixX3d points;  // points the convolutions run on
    std::shared_ptr<const SparseMatrix> conv;
    GridPooling pooling;
  };
  std::vector<Stage> stages;
  Tensor inputs;                         // [N, input_dim] constant
  std::vector<std::size_t> stage_trace;  // point counts: input, after each stage
  double base_cell = 0.0;
};

ScenePlan plan_scene(const GaussianScene& scene, const Encoder3dConfig& config);

struct SceneEncoding {
  Eigen::MatrixX3d points;  // N_g x 3
  Tensor features;          // [N_g, C_c]
  std::vector<std::size_t> stage_trace;
};

SceneEncoding encode_scene(const ScenePlan& plan, const ModelParams& params,
                           const Encoder3dConfig& config);
SceneEncoding encode_scene(const GaussianScene& scene, const ModelParams& params,
                           const Encoder3dConfig& config);

/// Registers enc3d.stage{s}.layer{l}.{weight,bias}.
void init_encoder3d(ModelParams& params, const Encoder3dConfig& config, std::mt19937_64& rng);

}  // namespace splatloc
