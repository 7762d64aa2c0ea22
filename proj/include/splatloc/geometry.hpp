// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatloc/common.hpp"

namespace splatloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. Pixel centers sit at integer coordinates, so pixel (u, v)
/// covers [u - 0.5, u + 0.5) x [v - 0.5, v + 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws ArgumentError when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;
  /// Intrinsics for the same camera after resizing the image to
  /// (new_width, new_height); scales fx by the width ratio and fy by the
  /// height ratio, and maps the principal point consistently with
  /// resize_bilinear's pixel-center alignment.
  CameraIntrinsics resized(int new_width, int new_height) const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Vec3& t);
  Pose(const Mat3& r, const Vec3& t);

  static Pose identity() { return {}; }
  /// Camera at `center` looking at `target` with the given world up vector.
  /// Camera axes: +x right, +y down, +z forward.
  static Pose look_at(const Vec3& center, const Vec3& target, const Vec3& up);

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Vec3 center() const;
  Vec3 transform(const Vec3& world) const;
  Pose inverse() const;
  /// (this * other)(x) = this(other(x)).
  Pose operator*(const Pose& other) const;
};

struct Projection {
  Vec2 pixel;
  double depth;
};

inline constexpr double kMinDepth = 1e-6;

/// Projects a world point; std::nullopt when it lies at or behind z_min.
std::optional<Projection> project(const Vec3& point, const Pose& pose, const CameraIntrinsics& k,
                                  double z_min = kMinDepth);

/// Inverse of project. Throws ArgumentError for depth <= 0.
Vec3 backproject(const Vec2& pixel, double depth, const Pose& pose, const CameraIntrinsics& k);

struct PoseError {
  double translation = 0.0;  // scene units, between camera centers
  double rotation_deg = 0.0;
};

PoseError pose_error(const Pose& estimate, const Pose& ground_truth);

/// Fraction of errors with translation <= t_thresh and rotation <= r_thresh.
double recall(std::span<const PoseError> errors, double t_thresh = 0.05, double r_thresh_deg = 5.0);

/// Component-wise lower median.
PoseError median_errors(std::span<const PoseError> errors);

/// Rotation by `angle_rad` about `axis` (normalized internally).
Eigen::Quaterniond axis_angle(const Vec3& axis, double angle_rad);

// ---- Text sidecars -----------------------------------------------------------

/// One line: "fx fy cx cy width height".
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);

/// One pose per line: "qw qx qy qz tx ty tz" (world-to-camera).
std::vector<Pose> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, std::span<const Pose> poses);

}  // namespace splatloc
