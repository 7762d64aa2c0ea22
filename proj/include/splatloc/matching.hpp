// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "splatloc/alignment.hpp"
#include "splatloc/params.hpp"
#include "splatloc/patch_grid.hpp"
#include "splatloc/pose_solver.hpp"
#include "splatloc/tensor.hpp"

namespace splatloc {

struct MatchingConfig {
  double theta_c = 0.3;
  double temperature = 0.1;
  std::size_t window = 5;
};

struct ScoreMatrix {
  Tensor raw;       // [N_c, N_s] cosine similarities
  Tensor row_soft;  // softmax over scene points (axis 1)
  Tensor col_soft;  // softmax over patches (axis 0)
  Tensor scores;    // row_soft * col_soft
};

struct CoarseMatch {
  std::size_t patch = 0;
  std::size_t scene = 0;
  double score = 0.0;
  Vec2 patch_center = Vec2::Zero();
  Vec3 scene_point = Vec3::Zero();
};

struct FineMatch {
  std::size_t scene = 0;
  std::size_t patch = 0;
  Vec3 scene_point = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
  double variance = 0.0;        // pixels^2
  double score = 0.0;           // coarse score
  std::vector<double> heatmap;  // window x window, row-major
};

/// Dual-softmax of temperature-scaled cosine similarities between the
/// projected image rows and scene rows.
ScoreMatrix score_matrix(const Tensor& image_shared, const Tensor& scene_shared,
                         double temperature);
/// Projects aligned features with match.proj2d / match.proj3d first.
ScoreMatrix coarse_scores(const AlignedFeatures& aligned, const ModelParams& params,
                          const MatchingConfig& config);

/// Mutual argmax pairs of `scores` ([N_c x N_s], row-major values) with
/// score >= theta. Ordered by patch index.
std::vector<std::pair<std::size_t, std::size_t>> mutual_matches(std::span<const double> scores,
                                                                std::size_t rows, std::size_t cols,
                                                                double theta);

std::vector<CoarseMatch> coarse_match(const ScoreMatrix& s, const PatchGrid& grid,
                                      const Eigen::MatrixX3d& scene_points, double theta_c);

/// Differentiable fine stage for a batch of (patch, scene row) pairs.
struct FineOutput {
  std::vector<std::size_t> kept;  // indices into the input pairs
  std::size_t dropped = 0;        // windows outside the fine grid
  Tensor heatmap;                 // [M, w*w]
  Tensor expectation;             // [M, 2] pixels
  std::vector<double> variance;   // M values, no gradient
};

/// Fine window cells (column, row) for patch `patch`, or nullopt when the
/// window leaves the fine grid.
std::optional<std::vector<std::size_t>> window_rows(const PatchGrid& grid, std::size_t patch,
                                                    std::size_t window);

/// Pixel offsets of the window cells relative to the anchor cell, [w*w, 2].
Eigen::MatrixX2d window_offsets(std::size_t window);

/// Expectation and total variance of a heatmap over the window cells
/// centered at `center` (no gradient).
std::pair<Vec2, double> heatmap_moments(std::span<const double> heatmap, const Vec2& center,
                                        std::size_t window);

FineOutput fine_forward(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                        const Tensor& fine_features, const PatchGrid& grid,
                        const Tensor& scene_features, const ModelParams& params,
                        const MatchingConfig& config);

std::vector<FineMatch> fine_match(std::span<const CoarseMatch> coarse, const Tensor& fine_features,
                                  const PatchGrid& grid, const Tensor& scene_features,
                                  const ModelParams& params, const MatchingConfig& config,
                                  std::size_t* dropped = nullptr);

std::vector<Correspondence> matches_to_correspondences(std::span<const FineMatch> fine);

/// CSV with header j,X,Y,Z,u,v,score,var.
void write_matches_csv(const std::filesystem::path& path, std::span<const FineMatch> fine);

/// Registers match.proj{2d,3d}, fine.scene_proj and fine.window_attn.
void init_matching(ModelParams& params, std::size_t coarse_dim, std::size_t fine_dim,
                   std::size_t ff_mult, std::mt19937_64& rng);

}  // namespace splatloc
