// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

namespace splatloc {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0 || !(cx >= 0.0) || !(cx < width) ||
      !(cy >= 0.0) || !(cy < height)) {
    throw ArgumentError(fmt::format("invalid intrinsics fx={} fy={} cx={} cy={} size={}x{}", fx, fy,
                                    cx, cy, width, height));
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

CameraIntrinsics CameraIntrinsics::resized(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  // Pixel centers sit at integers, so the principal point maps through the
  // pixel-edge frame.
  return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5, new_width, new_height};
}

Pose::Pose(const Eigen::Quaterniond& q, const Vec3& t) : rotation(q), translation(t) {
  // Leave already-unit quaternions bit-exact so text round trips are lossless.
  if (std::abs(q.squaredNorm() - 1.0) > 1e-14) rotation.normalize();
}

Pose::Pose(const Mat3& r, const Vec3& t)
    : rotation(Eigen::Quaterniond(r).normalized()), translation(t) {}

Pose Pose::look_at(const Vec3& center, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - center).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return {r, -r * center};
}

Vec3 Pose::center() const { return -(rotation.conjugate() * translation); }

Vec3 Pose::transform(const Vec3& world) const { return rotation * world + translation; }

Pose Pose::inverse() const {
  const Eigen::Quaterniond inv = rotation.conjugate();
  Pose p;
  p.rotation = inv;
  p.translation = -(inv * translation);
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose p;
  p.rotation = (rotation * other.rotation).normalized();
  p.translation = rotation * other.translation + translation;
  return p;
}

std::optional<Projection> project(const Vec3& point, const Pose& pose, const CameraIntrinsics& k,
                                  double z_min) {
  const Vec3 c = pose.transform(point);
  if (!(c.z() > z_min)) return std::nullopt;
  return Projection{{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy}, c.z()};
}

Vec3 backproject(const Vec2& pixel, double depth, const Pose& pose, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) {
    throw ArgumentError(fmt::format("backproject: depth must be positive, got {}", depth));
  }
  const Vec3 cam((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return pose.rotation.conjugate() * (cam - pose.translation);
}

PoseError pose_error(const Pose& estimate, const Pose& ground_truth) {
  PoseError e;
  e.translation = (estimate.center() - ground_truth.center()).norm();
  const Mat3 delta = estimate.rotation_matrix() * ground_truth.rotation_matrix().transpose();
  const double c = std::clamp((delta.trace() - 1.0) / 2.0, -1.0, 1.0);
  e.rotation_deg = std::acos(c) * 180.0 / std::numbers::pi;
  return e;
}

double recall(std::span<const PoseError> errors, double t_thresh, double r_thresh_deg) {
  if (errors.empty()) throw ArgumentError("recall: empty error list");
  const auto hits = std::count_if(errors.begin(), errors.end(), [&](const PoseError& e) {
    return e.translation <= t_thresh && e.rotation_deg <= r_thresh_deg;
  });
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

PoseError median_errors(std::span<const PoseError> errors) {
  if (errors.empty()) throw ArgumentError("median_errors: empty error list");
  std::vector<double> t, r;
  for (const auto& e : errors) {
    t.push_back(e.translation);
    r.push_back(e.rotation_deg);
  }
  const std::size_t mid = (errors.size() - 1) / 2;
  std::nth_element(t.begin(), t.begin() + static_cast<long>(mid), t.end());
  std::nth_element(r.begin(), r.begin() + static_cast<long>(mid), r.end());
  return {t[mid], r[mid]};
}

Eigen::Quaterniond axis_angle(const Vec3& axis, double angle_rad) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis.normalized()));
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open intrinsics '{}'", path.string()));
  CameraIntrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw FormatError(fmt::format("'{}': expected 'fx fy cx cy width height'", path.string()));
  }
  k.validate();
  return k;
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width,
                     k.height);
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open poses '{}'", path.string()));
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    double qw, qx, qy, qz, tx, ty, tz;
    if (!(ss >> qw >> qx >> qy >> qz >> tx >> ty >> tz)) {
      throw FormatError(
          fmt::format("'{}' line {}: expected 'qw qx qy qz tx ty tz'", path.string(), line_no));
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(q.norm() > 0.0)) {
      throw FormatError(fmt::format("'{}' line {}: zero quaternion", path.string(), line_no));
    }
    poses.emplace_back(q, Vec3(tx, ty, tz));
  }
  return poses;
}

void write_poses(const std::filesystem::path& path, std::span<const Pose> poses) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  for (const auto& p : poses) {
    out << fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n", p.rotation.w(),
                       p.rotation.x(), p.rotation.y(), p.rotation.z(), p.translation.x(),
                       p.translation.y(), p.translation.z());
  }
}

}  // namespace splatloc
