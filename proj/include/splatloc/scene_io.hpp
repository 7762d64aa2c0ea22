// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatloc/common.hpp"
#include "splatloc/geometry.hpp"

namespace splatloc {

inline constexpr std::size_t kShCoeffs = 48;  // 3 DC + 45 rest, degree 3
inline constexpr std::size_t kGaussianFeatureDim = 56;

/// One 3D Gaussian as stored by the vanilla 3DGS exporter.
struct Gaussian {
  Vec3 position = Vec3::Zero();
  /// (w, x, y, z), stored unnormalized.
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
  /// log of the per-axis standard deviation.
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  /// DC r,g,b followed by f_rest_0..44 (channel-major, 15 per channel).
  std::array<double, kShCoeffs> sh{};

  double opacity() const;
  Eigen::Quaterniond normalized_rotation() const;
  Vec3 scale() const { return log_scale.array().exp(); }
};

struct BoundingBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Vec3 extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p) const;
};

/// Immutable after construction; safe to share across threads.
class GaussianScene {
 public:
  GaussianScene() = default;
  GaussianScene(std::vector<Gaussian> gaussians, std::string source_path = {});

  const std::vector<Gaussian>& gaussians() const { return gaussians_; }
  std::size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }
  const std::string& source_path() const { return source_path_; }
  const BoundingBox& bbox() const { return bbox_; }

  /// Positions as an N x 3 matrix.
  Eigen::MatrixX3d positions() const;

 private:
  std::vector<Gaussian> gaussians_;
  std::string source_path_;
  BoundingBox bbox_;
};

double sigmoid(double x);
double logit(double p);

/// Reads a binary-little-endian vanilla 3DGS PLY file.
GaussianScene load_ply(const std::filesystem::path& path);
/// Writes the vanilla layout (normals written as zeros), float32 payload.
void save_ply(const std::filesystem::path& path, const GaussianScene& scene);

/// Keeps Gaussians whose activated opacity is >= threshold, in order.
GaussianScene filter_by_opacity(const GaussianScene& scene, double threshold = 0.9);

/// Uniform random subset of size n (identity when size() <= n). The kept
/// Gaussians stay in their original relative order.
GaussianScene subsample_uniform(const GaussianScene& scene, std::size_t n, std::uint64_t seed);

/// Indices chosen by subsample_uniform, ascending.
std::vector<std::size_t> subsample_indices(std::size_t count, std::size_t n, std::uint64_t seed);

/// Per-Gaussian encoder inputs: [opacity, sh(48), unit quaternion(4),
/// scale(3)]. Throws DataError naming the first non-finite Gaussian.
Eigen::MatrixXd gaussian_input_features(const GaussianScene& scene);

/// Throws DataError if the scene has no Gaussians left.
void require_nonempty(const GaussianScene& scene, const std::string& stage);

/// Filters then subsamples, the order the localization pipeline uses.
GaussianScene prepare_scene(const GaussianScene& raw, double opacity_threshold,
                            std::size_t max_gaussians, std::uint64_t seed);

}  // namespace splatloc
