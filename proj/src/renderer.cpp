// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <Eigen/Dense>

namespace splatloc {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554,   -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

constexpr double kDilation = 0.3;
constexpr double kAlphaMax = 0.99;
constexpr double kAlphaMin = 1.0 / 255.0;
constexpr double kNearPlane = 0.01;

struct Splat {
  Vec2 mean;
  // Inverse 2D covariance (a, b, c) for [[a, b], [b, c]].
  double conic_a, conic_b, conic_c;
  double opacity;
  double depth;
  Vec3 color;
  int x_min, x_max, y_min, y_max;  // inclusive pixel footprint
};

struct Prepared {
  std::vector<Splat> splats;  // sorted front to back
  std::size_t culled = 0;
  std::size_t skipped_singular = 0;
};

Prepared prepare(const GaussianScene& scene, const Pose& pose, const CameraIntrinsics& k) {
  Prepared out;
  const Mat3 w = pose.rotation_matrix();
  const Vec3 cam_center = pose.center();
  const double lim_x = 1.3 * (0.5 * k.width / k.fx);
  const double lim_y = 1.3 * (0.5 * k.height / k.fy);
  for (const Gaussian& g : scene.gaussians()) {
    const Vec3 pc = pose.transform(g.position);
    if (!(pc.z() > kNearPlane)) {
      ++out.culled;
      continue;
    }
    const Mat3 rg = g.normalized_rotation().toRotationMatrix();
    const Vec3 s2 = (2.0 * g.log_scale).array().exp();
    const Mat3 cov3 = rg * s2.asDiagonal() * rg.transpose();

    const double tx = std::clamp(pc.x() / pc.z(), -lim_x, lim_x) * pc.z();
    const double ty = std::clamp(pc.y() / pc.z(), -lim_y, lim_y) * pc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx / pc.z(), 0.0, -k.fx * tx / (pc.z() * pc.z()), 0.0, k.fy / pc.z(),
        -k.fy * ty / (pc.z() * pc.z());
    const Eigen::Matrix<double, 2, 3> t = j * w;
    Eigen::Matrix2d cov2 = t * cov3 * t.transpose();
    cov2(0, 0) += kDilation;
    cov2(1, 1) += kDilation;
    const double det = cov2.determinant();
    if (!(det > 1e-12) || !std::isfinite(det)) {
      ++out.skipped_singular;
      continue;
    }
    Splat s;
    s.conic_a = cov2(1, 1) / det;
    s.conic_b = -cov2(0, 1) / det;
    s.conic_c = cov2(0, 0) / det;
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
    const double radius = std::ceil(3.0 * std::sqrt(lambda));
    s.mean = {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
    s.x_min = static_cast<int>(std::max(0.0, std::floor(s.mean.x() - radius)));
    s.x_max = static_cast<int>(std::min<double>(k.width - 1, std::ceil(s.mean.x() + radius)));
    s.y_min = static_cast<int>(std::max(0.0, std::floor(s.mean.y() - radius)));
    s.y_max = static_cast<int>(std::min<double>(k.height - 1, std::ceil(s.mean.y() + radius)));
    if (s.x_min > s.x_max || s.y_min > s.y_max) {
      ++out.culled;
      continue;
    }
    s.opacity = g.opacity();
    s.depth = pc.z();
    s.color =
        eval_sh(std::span<const double, kShCoeffs>(g.sh), (g.position - cam_center).normalized());
    out.splats.push_back(s);
  }
  std::stable_sort(out.splats.begin(), out.splats.end(),
                   [](const Splat& a, const Splat& b) { return a.depth < b.depth; });
  return out;
}

RenderOutput allocate(const CameraIntrinsics& k, const Prepared& p) {
  RenderOutput r;
  r.color = ImageF(k.width, k.height, 3);
  r.depth = ImageF(k.width, k.height, 1);
  r.alpha = ImageF(k.width, k.height, 1);
  r.culled = p.culled;
  r.skipped_singular = p.skipped_singular;
  return r;
}

// Composites one pixel over `order` (indices into splats, front to back).
void shade_pixel(int x, int y, const std::vector<Splat>& splats, std::span<const std::size_t> order,
                 RenderOutput& out) {
  double t = 1.0;
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  for (std::size_t idx : order) {
    const Splat& s = splats[idx];
    if (x < s.x_min || x > s.x_max || y < s.y_min || y > s.y_max) continue;
    const double dx = x - s.mean.x();
    const double dy = y - s.mean.y();
    const double power = -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
    if (power > 0.0) continue;
    const double a = std::min(kAlphaMax, s.opacity * std::exp(power));
    if (a < kAlphaMin) continue;
    color += t * a * s.color;
    depth += t * a * s.depth;
    t *= 1.0 - a;
  }
  const double alpha = 1.0 - t;
  for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = color[c];
  out.alpha.at(x, y) = alpha;
  out.depth.at(x, y) = alpha > 1e-6 ? depth / alpha : 0.0;
}

}  // namespace

Vec3 eval_sh(std::span<const double, kShCoeffs> coeffs, const Vec3& dir) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  Vec3 rgb;
  for (int c = 0; c < 3; ++c) {
    auto sh = [&](int k) { return k == 0 ? coeffs[c] : coeffs[3 + c * 15 + (k - 1)]; };
    double r = kC0 * sh(0);
    r += -kC1 * y * sh(1) + kC1 * z * sh(2) - kC1 * x * sh(3);
    r += kC2[0] * xy * sh(4) + kC2[1] * yz * sh(5) + kC2[2] * (2.0 * zz - xx - yy) * sh(6) +
         kC2[3] * xz * sh(7) + kC2[4] * (xx - yy) * sh(8);
    r += kC3[0] * y * (3.0 * xx - yy) * sh(9) + kC3[1] * xy * z * sh(10) +
         kC3[2] * y * (4.0 * zz - xx - yy) * sh(11) +
         kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh(12) +
         kC3[4] * x * (4.0 * zz - xx - yy) * sh(13) + kC3[5] * z * (xx - yy) * sh(14) +
         kC3[6] * x * (xx - 3.0 * yy) * sh(15);
    rgb[c] = std::clamp(r + 0.5, 0.0, 1.0);
  }
  return rgb;
}

RenderOutput render(const GaussianScene& scene, const Pose& pose, const CameraIntrinsics& k) {
  k.validate();
  const Prepared p = prepare(scene, pose, k);
  RenderOutput out = allocate(k, p);
  std::vector<std::size_t> order(p.splats.size());
  std::iota(order.begin(), order.end(), 0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) shade_pixel(x, y, p.splats, order, out);
  }
  return out;
}

RenderOutput render_tile_parallel(const GaussianScene& scene, const Pose& pose,
                                  const CameraIntrinsics& k, int tile_size) {
  k.validate();
  if (tile_size <= 0) throw ArgumentError("render_tile_parallel: tile size must be positive");
  const Prepared p = prepare(scene, pose, k);
  RenderOutput out = allocate(k, p);
  const int tiles_x = (k.width + tile_size - 1) / tile_size;
  const int tiles_y = (k.height + tile_size - 1) / tile_size;
  const int n_tiles = tiles_x * tiles_y;

  auto run_tile = [&](int tile) {
    const int x0 = (tile % tiles_x) * tile_size, y0 = (tile / tiles_x) * tile_size;
    const int x1 = std::min(k.width, x0 + tile_size) - 1;
    const int y1 = std::min(k.height, y0 + tile_size) - 1;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < p.splats.size(); ++i) {
      const Splat& s = p.splats[i];
      if (s.x_max >= x0 && s.x_min <= x1 && s.y_max >= y0 && s.y_min <= y1) {
        order.push_back(i);
      }
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) shade_pixel(x, y, p.splats, order, out);
    }
  };

  const int workers = static_cast<int>(std::min<std::size_t>(max_threads(), n_tiles));
  if (workers <= 1) {
    for (int t = 0; t < n_tiles; ++t) run_tile(t);
    return out;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int t = w; t < n_tiles; t += workers) run_tile(t);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

DepthEncoding encode_depth16(const ImageF& depth) {
  double max_depth = 0.0;
  for (double d : depth.data) max_depth = std::max(max_depth, d);
  DepthEncoding enc;
  enc.scale = max_depth > 0.0 ? 65535.0 / max_depth : 1.0;
  enc.values.resize(depth.data.size());
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    enc.values[i] = static_cast<std::uint16_t>(
        std::lround(std::clamp(depth.data[i] * enc.scale, 0.0, 65535.0)));
  }
  return enc;
}

}  // namespace splatloc
