// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <random>
#include <vector>

#include "splatloc/image.hpp"
#include "splatloc/params.hpp"
#include "splatloc/patch_grid.hpp"
#include "splatloc/tensor.hpp"

namespace splatloc {

struct Encoder2dConfig {
  /// Output channels of blocks 1-4. Blocks 1-3 halve the resolution; block 4
  /// is a residual block at 1/8 resolution.
  std::array<std::size_t, 4> block_channels{32, 48, 64, 64};
  std::size_t fine_dim = 32;
  std::size_t coarse_dim = 64;
  /// Side length images are resized to before encoding.
  int image_size = 480;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

struct ImageEncoding {
  Tensor coarse;  // [H/8 * W/8, C_c], row-major over the patch grid
  Tensor fine;    // [H/2 * W/2, C_f], row-major over the fine grid
  PatchGrid grid;
};

/// Bilinear resize to target x target, scale to [0, 1], per-channel
/// normalization. Returns [3, target, target].
Tensor preprocess(const Image8& image, const Encoder2dConfig& config);
/// Same as above, starting from a [0, 1] float image.
Tensor preprocess(const ImageF& image, const Encoder2dConfig& config);

/// Input [3, H, W] with H and W divisible by 8.
ImageEncoding encode_image(const Tensor& image, const ModelParams& params,
                           const Encoder2dConfig& config);

/// Registers enc2d.block{1..4}.* and enc2d.head_{coarse,fine}.*.
void init_encoder2d(ModelParams& params, const Encoder2dConfig& config, std::mt19937_64& rng);

}  // namespace splatloc
