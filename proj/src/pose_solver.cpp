// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/pose_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <Eigen/Dense>

namespace splatloc {
namespace {

using Mat34 = Eigen::Matrix<double, 3, 4>;

Vec2 normalized_coords(const Vec2& px, const CameraIntrinsics& k) {
  return {(px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy};
}

double total_squared_error(std::span<const Correspondence> corrs, const Pose& pose,
                           const CameraIntrinsics& k) {
  double total = 0.0;
  for (const auto& c : corrs) {
    const double e = reprojection_error(c, pose, k);
    if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
    total += e * e;
  }
  return total;
}

// Rigid transform taking world points onto camera points (Kabsch, no scale).
Pose absolute_orientation(std::span<const Vec3> world, std::span<const Vec3> cam) {
  Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    cw += world[i];
    cc += cam[i];
  }
  cw /= static_cast<double>(world.size());
  cc /= static_cast<double>(world.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    h += (cam[i] - cc) * (world[i] - cw).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return Pose(r, cc - r * cw);
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

struct PcaFrame {
  Vec3 centroid;
  Mat3 axes;       // columns, descending variance
  Vec3 variances;  // descending
};

PcaFrame pca(std::span<const Correspondence> corrs) {
  PcaFrame f;
  f.centroid = Vec3::Zero();
  for (const auto& c : corrs) f.centroid += c.world;
  f.centroid /= static_cast<double>(corrs.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& c : corrs) {
    const Vec3 d = c.world - f.centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(corrs.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  for (int i = 0; i < 3; ++i) {
    f.axes.col(i) = es.eigenvectors().col(2 - i);
    f.variances[i] = std::max(0.0, es.eigenvalues()[2 - i]);
  }
  return f;
}

// ---- EPnP --------------------------------------------------------------------

struct EpnpSolution {
  Pose pose;
  double error = std::numeric_limits<double>::infinity();
};

class Epnp {
 public:
  Epnp(std::span<const Correspondence> corrs, const CameraIntrinsics& k, const PcaFrame& frame)
      : corrs_(corrs), k_(k) {
    control_[0] = frame.centroid;
    for (int i = 0; i < 3; ++i) {
      control_[i + 1] = frame.centroid + std::sqrt(frame.variances[i]) * frame.axes.col(i);
    }
    Mat3 basis;
    for (int i = 0; i < 3; ++i) basis.col(i) = control_[i + 1] - control_[0];
    const Mat3 inv = basis.inverse();
    alphas_.resize(corrs.size());
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const Vec3 a = inv * (corrs[i].world - control_[0]);
      alphas_[i] = {1.0 - a.sum(), a[0], a[1], a[2]};
    }
  }

  Pose solve() {
    const std::size_t n = corrs_.size();
    Eigen::MatrixXd m(2 * n, 12);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 uv = normalized_coords(corrs_[i].pixel, k_);
      for (int j = 0; j < 4; ++j) {
        const double a = alphas_[i][j];
        m.block<1, 3>(2 * i, 3 * j) << a, 0.0, -a * uv.x();
        m.block<1, 3>(2 * i + 1, 3 * j) << 0.0, a, -a * uv.y();
      }
    }
    const Eigen::Matrix<double, 12, 12> mtm = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> es(mtm);
    // Null-space basis, smallest eigenvalue first.
    std::array<Eigen::Matrix<double, 12, 1>, 4> v;
    for (int i = 0; i < 4; ++i) v[i] = es.eigenvectors().col(i);

    Eigen::Matrix<double, 6, 10> l;
    Eigen::Matrix<double, 6, 1> rho;
    compute_l_and_rho(v, l, rho);

    EpnpSolution best;
    for (int variant = 0; variant < 3; ++variant) {
      Eigen::Vector4d betas = variant == 0   ? betas_approx_4(l, rho)
                              : variant == 1 ? betas_approx_2(l, rho)
                                             : betas_approx_3(l, rho);
      gauss_newton_betas(l, rho, betas);
      EpnpSolution s = pose_from_betas(v, betas);
      if (s.error < best.error) best = s;
    }
    if (!std::isfinite(best.error)) {
      throw DegenerateConfigError("EPnP: no valid solution");
    }
    return best.pose;
  }

 private:
  void compute_l_and_rho(const std::array<Eigen::Matrix<double, 12, 1>, 4>& v,
                         Eigen::Matrix<double, 6, 10>& l, Eigen::Matrix<double, 6, 1>& rho) const {
    static constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (int p = 0; p < 6; ++p) {
      const int a = kPairs[p][0], b = kPairs[p][1];
      std::array<Vec3, 4> dv;
      for (int i = 0; i < 4; ++i) dv[i] = v[i].segment<3>(3 * a) - v[i].segment<3>(3 * b);
      l(p, 0) = dv[0].dot(dv[0]);
      l(p, 1) = 2.0 * dv[0].dot(dv[1]);
      l(p, 2) = dv[1].dot(dv[1]);
      l(p, 3) = 2.0 * dv[0].dot(dv[2]);
      l(p, 4) = 2.0 * dv[1].dot(dv[2]);
      l(p, 5) = dv[2].dot(dv[2]);
      l(p, 6) = 2.0 * dv[0].dot(dv[3]);
      l(p, 7) = 2.0 * dv[1].dot(dv[3]);
      l(p, 8) = 2.0 * dv[2].dot(dv[3]);
      l(p, 9) = dv[3].dot(dv[3]);
      rho[p] = (control_[a] - control_[b]).squaredNorm();
    }
  }

  static Eigen::Vector4d betas_approx_4(const Eigen::Matrix<double, 6, 10>& l,
                                        const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 4> a;
    a << l.col(0), l.col(1), l.col(3), l.col(6);
    const Eigen::Vector4d b = a.colPivHouseholderQr().solve(rho);
    Eigen::Vector4d betas;
    if (b[0] < 0.0) {
      betas[0] = std::sqrt(-b[0]);
      betas.tail<3>() = -b.tail<3>() / betas[0];
    } else {
      betas[0] = std::sqrt(b[0]);
      betas.tail<3>() = b.tail<3>() / std::max(betas[0], 1e-300);
    }
    return betas;
  }

  static Eigen::Vector4d betas_approx_2(const Eigen::Matrix<double, 6, 10>& l,
                                        const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 3> a;
    a << l.col(0), l.col(1), l.col(2);
    const Eigen::Vector3d b = a.colPivHouseholderQr().solve(rho);
    Eigen::Vector4d betas = Eigen::Vector4d::Zero();
    if (b[0] < 0.0) {
      betas[0] = std::sqrt(-b[0]);
      betas[1] = b[2] < 0.0 ? std::sqrt(-b[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(b[0]);
      betas[1] = b[2] > 0.0 ? std::sqrt(b[2]) : 0.0;
    }
    if (b[1] < 0.0) betas[0] = -betas[0];
    return betas;
  }

  static Eigen::Vector4d betas_approx_3(const Eigen::Matrix<double, 6, 10>& l,
                                        const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 5> a;
    a << l.col(0), l.col(1), l.col(2), l.col(3), l.col(4);
    const Eigen::Matrix<double, 5, 1> b = a.colPivHouseholderQr().solve(rho);
    Eigen::Vector4d betas = Eigen::Vector4d::Zero();
    if (b[0] < 0.0) {
      betas[0] = std::sqrt(-b[0]);
      betas[1] = b[2] < 0.0 ? std::sqrt(-b[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(b[0]);
      betas[1] = b[2] > 0.0 ? std::sqrt(b[2]) : 0.0;
    }
    if (b[1] < 0.0) betas[0] = -betas[0];
    betas[2] = betas[0] != 0.0 ? b[3] / betas[0] : 0.0;
    return betas;
  }

  static void gauss_newton_betas(const Eigen::Matrix<double, 6, 10>& l,
                                 const Eigen::Matrix<double, 6, 1>& rho, Eigen::Vector4d& betas) {
    for (int it = 0; it < 5; ++it) {
      Eigen::Matrix<double, 6, 4> a;
      Eigen::Matrix<double, 6, 1> r;
      const double b0 = betas[0], b1 = betas[1], b2 = betas[2], b3 = betas[3];
      for (int i = 0; i < 6; ++i) {
        const auto row = l.row(i);
        a(i, 0) = 2 * row[0] * b0 + row[1] * b1 + row[3] * b2 + row[6] * b3;
        a(i, 1) = row[1] * b0 + 2 * row[2] * b1 + row[4] * b2 + row[7] * b3;
        a(i, 2) = row[3] * b0 + row[4] * b1 + 2 * row[5] * b2 + row[8] * b3;
        a(i, 3) = row[6] * b0 + row[7] * b1 + row[8] * b2 + 2 * row[9] * b3;
        r[i] = rho[i] - (row[0] * b0 * b0 + row[1] * b0 * b1 + row[2] * b1 * b1 + row[3] * b0 * b2 +
                         row[4] * b1 * b2 + row[5] * b2 * b2 + row[6] * b0 * b3 + row[7] * b1 * b3 +
                         row[8] * b2 * b3 + row[9] * b3 * b3);
      }
      const Eigen::Vector4d dx = a.colPivHouseholderQr().solve(r);
      if (!dx.allFinite()) return;
      betas += dx;
    }
  }

  EpnpSolution pose_from_betas(const std::array<Eigen::Matrix<double, 12, 1>, 4>& v,
                               const Eigen::Vector4d& betas) const {
    Eigen::Matrix<double, 12, 1> x = Eigen::Matrix<double, 12, 1>::Zero();
    for (int i = 0; i < 4; ++i) x += betas[i] * v[i];
    std::vector<Vec3> cam(corrs_.size()), world(corrs_.size());
    int negative = 0;
    for (std::size_t i = 0; i < corrs_.size(); ++i) {
      cam[i] = Vec3::Zero();
      for (int j = 0; j < 4; ++j) cam[i] += alphas_[i][j] * x.segment<3>(3 * j);
      world[i] = corrs_[i].world;
      if (cam[i].z() < 0.0) ++negative;
    }
    if (2 * negative > static_cast<int>(cam.size())) {
      for (auto& c : cam) c = -c;
    }
    EpnpSolution s;
    if (!x.allFinite()) return s;
    s.pose = absolute_orientation(world, cam);
    s.error = total_squared_error(corrs_, s.pose, k_);
    return s;
  }

  std::span<const Correspondence> corrs_;
  CameraIntrinsics k_;
  std::array<Vec3, 4> control_;
  std::vector<std::array<double, 4>> alphas_;
};

// Coplanar points: DLT homography from plane coordinates to normalized image
// coordinates, decomposed into a rotation and translation.
Pose planar_pose(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                 const PcaFrame& frame) {
  const std::size_t n = corrs.size();
  std::vector<Vec2> plane(n), img(n);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = corrs[i].world - frame.centroid;
    plane[i] = {d.dot(frame.axes.col(0)), d.dot(frame.axes.col(1))};
    spread += plane[i].squaredNorm();
    img[i] = normalized_coords(corrs[i].pixel, k);
  }
  const double s = std::sqrt(spread / static_cast<double>(n));
  if (!(s > 0.0)) throw DegenerateConfigError("PnP: coincident 3D points");
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = plane[i].x() / s, y = plane[i].y() / s;
    const double u = img[i].x(), v = img[i].y();
    a.row(2 * i) << x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Mat3 h;
  h << hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8];
  // Undo the plane-coordinate scaling.
  h.col(0) /= s;
  h.col(1) /= s;
  double lambda = 2.0 / (h.col(0).norm() + h.col(1).norm());
  if (h(2, 2) * lambda < 0.0) lambda = -lambda;
  Mat3 q;
  q.col(0) = lambda * h.col(0);
  q.col(1) = lambda * h.col(1);
  q.col(2) = q.col(0).cross(q.col(1));
  const Mat3 r_plane = nearest_rotation(q);
  const Vec3 t_plane = lambda * h.col(2);
  // r_plane maps plane axes to camera axes: R * axes = r_plane.
  Mat3 axes = frame.axes;
  if (axes.determinant() < 0.0) axes.col(2) = -axes.col(2);
  Mat3 r_plane_fixed = r_plane;
  r_plane_fixed.col(2) = r_plane.col(0).cross(r_plane.col(1));
  const Mat3 r = r_plane_fixed * axes.transpose();
  return Pose(nearest_rotation(r), t_plane - r * frame.centroid);
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Mat3 skew;
    skew << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + skew;
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

}  // namespace

double reprojection_error(const Correspondence& c, const Pose& pose, const CameraIntrinsics& k) {
  const auto p = project(c.world, pose, k);
  if (!p) return std::numeric_limits<double>::infinity();
  return (p->pixel - c.pixel).norm();
}

Pose refine_pose_gauss_newton(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                              const Pose& init, int max_iterations) {
  Mat3 r = init.rotation_matrix();
  Vec3 t = init.translation;
  double cost = total_squared_error(corrs, Pose(r, t), k);
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corrs) {
      const Vec3 pc = r * c.world + t;
      if (!(pc.z() > kMinDepth)) continue;
      const double iz = 1.0 / pc.z();
      const Vec2 res(k.fx * pc.x() * iz + k.cx - c.pixel.x(),
                     k.fy * pc.y() * iz + k.cy - c.pixel.y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz, 0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      Mat3 neg_skew;
      neg_skew << 0, pc.z(), -pc.y(), -pc.z(), 0, pc.x(), pc.y(), -pc.x(), 0;
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = dproj * neg_skew;
      j.rightCols<3>() = dproj;
      jtj.noalias() += j.transpose() * j;
      jtr.noalias() += j.transpose() * res;
    }
    const Eigen::Matrix<double, 6, 1> delta = -jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) break;
    double step = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 6; ++halving, step *= 0.5) {
      const Mat3 dr = so3_exp(step * delta.head<3>());
      const Mat3 r_new = nearest_rotation(dr * r);
      const Vec3 t_new = dr * t + step * delta.tail<3>();
      const double new_cost = total_squared_error(corrs, Pose(r_new, t_new), k);
      if (new_cost <= cost) {
        improved = new_cost < cost;
        r = r_new;
        t = t_new;
        cost = new_cost;
        break;
      }
    }
    if (!improved || delta.norm() < 1e-15) break;
  }
  return Pose(r, t);
}

Pose pnp_minimal(std::span<const Correspondence> corrs, const CameraIntrinsics& k) {
  if (corrs.size() < kMinimalSample) {
    throw ArgumentError(fmt::format("PnP needs at least 4 correspondences, got {}", corrs.size()));
  }
  const PcaFrame frame = pca(corrs);
  const double largest = frame.variances[0];
  if (!(largest > 0.0) || frame.variances[1] < 1e-12 * largest) {
    throw DegenerateConfigError("PnP: 3D points are collinear or coincident");
  }
  Pose init;
  if (frame.variances[2] < 1e-10 * largest) {
    init = planar_pose(corrs, k, frame);
  } else {
    init = Epnp(corrs, k, frame).solve();
  }
  return refine_pose_gauss_newton(corrs, k, init, 10);
}

SolveResult ransac_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                       const RansacOptions& options) {
  const std::size_t n = corrs.size();
  if (n < kMinimalSample) {
    throw ArgumentError(fmt::format("RANSAC PnP needs at least 4 correspondences, got {}", n));
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::size_t best_count = 0;
  double best_rmse = std::numeric_limits<double>::infinity();
  Pose best_pose;
  std::size_t required = options.max_iterations;
  std::size_t iterations = 0;
  std::array<Correspondence, kMinimalSample> sample;

  while (iterations < required && iterations < options.max_iterations) {
    ++iterations;
    std::array<std::size_t, kMinimalSample> idx{};
    for (std::size_t s = 0; s < kMinimalSample; ++s) {
      std::size_t candidate;
      do {
        candidate = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + static_cast<long>(s), candidate) !=
               idx.begin() + static_cast<long>(s));
      idx[s] = candidate;
      sample[s] = corrs[candidate];
    }
    Pose hypothesis;
    try {
      hypothesis = pnp_minimal(sample, k);
    } catch (const DegenerateConfigError&) {
      continue;
    }
    std::size_t count = 0;
    double sq = 0.0;
    for (const auto& c : corrs) {
      const double e = reprojection_error(c, hypothesis, k);
      if (e < options.inlier_px) {
        ++count;
        sq += e * e;
      }
    }
    if (count == 0) continue;
    const double rmse = std::sqrt(sq / static_cast<double>(count));
    if (count > best_count || (count == best_count && rmse < best_rmse)) {
      best_count = count;
      best_rmse = rmse;
      best_pose = hypothesis;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double denom = std::log(1.0 - std::pow(w, static_cast<double>(kMinimalSample)));
      if (denom < 0.0 && std::isfinite(denom)) {
        const double needed = std::log(1.0 - options.confidence) / denom;
        required = static_cast<std::size_t>(std::max(1.0, std::ceil(needed)));
      } else if (w >= 1.0) {
        required = 1;
      }
    }
  }

  if (best_count < kMinimalSample) {
    throw NoConsensusError(
        fmt::format("RANSAC found only {} inliers among {} correspondences", best_count, n));
  }

  std::vector<Correspondence> inliers;
  for (const auto& c : corrs) {
    if (reprojection_error(c, best_pose, k) < options.inlier_px) inliers.push_back(c);
  }
  SolveResult result;
  try {
    result.pose = pnp_minimal(inliers, k);
  } catch (const DegenerateConfigError&) {
    result.pose = best_pose;
  }
  result.inlier_mask.resize(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = reprojection_error(corrs[i], result.pose, k);
    result.inlier_mask[i] = e < options.inlier_px;
    if (result.inlier_mask[i]) {
      ++result.inlier_count;
      sq += e * e;
    }
  }
  if (result.inlier_count < kMinimalSample) {
    throw NoConsensusError(fmt::format("final re-solve kept only {} inliers", result.inlier_count));
  }
  result.reprojection_rmse = std::sqrt(sq / static_cast<double>(result.inlier_count));
  result.iterations_used = iterations;
  return result;
}

}  // namespace splatloc
