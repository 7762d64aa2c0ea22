// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "splatloc/geometry.hpp"
#include "splatloc/image.hpp"
#include "splatloc/scene_io.hpp"

namespace splatloc {

struct RenderOutput {
  ImageF color;  // 3 channels in [0, 1]; black background
  ImageF depth;  // 1 channel, alpha-weighted expected depth, 0 where empty
  ImageF alpha;  // 1 channel accumulated opacity
  std::size_t culled = 0;
  std::size_t skipped_singular = 0;
};

/// Degree-3 spherical harmonics radiance, shifted by 0.5 and clamped to [0, 1].
Vec3 eval_sh(std::span<const double, kShCoeffs> coeffs, const Vec3& view_dir);

/// EWA splatting with front-to-back compositing (vanilla rasterizer
/// conventions: 0.3 px dilation, 3-sigma footprint, alpha clamp 0.99,
/// 1/255 skip threshold). Every splat is composited; there is no early
/// termination, so adding Gaussians never lowers alpha. Image size comes
/// from `k`.
RenderOutput render(const GaussianScene& scene, const Pose& pose, const CameraIntrinsics& k);

/// Same contract as render, evaluated tile by tile (possibly in parallel).
/// Output is bit-identical to render.
RenderOutput render_tile_parallel(const GaussianScene& scene, const Pose& pose,
                                  const CameraIntrinsics& k, int tile_size = 16);

/// Linear 16-bit depth encoding: value = round(depth * scale).
struct DepthEncoding {
  std::vector<std::uint16_t> values;
  double scale = 1.0;
};
DepthEncoding encode_depth16(const ImageF& depth);

}  // namespace splatloc
