// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splatloc/geometry.hpp"

namespace splatloc {

struct Correspondence {
  Vec3 world;
  Vec2 pixel;
};

inline constexpr std::size_t kMinimalSample = 4;

/// EPnP closed form (homography decomposition for coplanar points) followed
/// by at most 10 Gauss-Newton iterations on the squared reprojection error.
/// Throws ArgumentError for fewer than 4 correspondences and
/// DegenerateConfigError for collinear or otherwise rank-deficient input.
Pose pnp_minimal(std::span<const Correspondence> corrs, const CameraIntrinsics& k);

/// Gauss-Newton polish of `init` over all correspondences.
Pose refine_pose_gauss_newton(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                              const Pose& init, int max_iterations = 10);

/// Pixel distance between the projection of c.world and c.pixel; +inf when
/// the point is behind the camera.
double reprojection_error(const Correspondence& c, const Pose& pose, const CameraIntrinsics& k);

struct RansacOptions {
  double inlier_px = 3.0;
  std::size_t max_iterations = 2000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct SolveResult {
  Pose pose;
  std::vector<bool> inlier_mask;
  std::size_t inlier_count = 0;
  double reprojection_rmse = 0.0;  // over inliers
  std::size_t iterations_used = 0;
};

/// RANSAC over 4-point EPnP hypotheses with adaptive termination, then a
/// pnp_minimal re-solve on the best consensus set. Deterministic given the
/// seed. Throws NoConsensusError when fewer than 4 inliers are found.
SolveResult ransac_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                       const RansacOptions& options = {});

}  // namespace splatloc
