// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "splatloc/geometry.hpp"

namespace splatloc {

// Pixel centers sit at integer coordinates, so a cell of stride s at grid
// index i covers [s*i - 0.5, s*(i+1) - 0.5) and is centered at
// s*i + (s - 1) / 2. The image encoder, ground truth and fine matching all
// go through these helpers.

inline constexpr std::size_t kCoarseStride = 8;
inline constexpr std::size_t kFineStride = 2;
inline constexpr std::size_t kFinePerCoarse = kCoarseStride / kFineStride;

inline double cell_center(std::size_t index, std::size_t stride) {
  return static_cast<double>(stride * index) + 0.5 * static_cast<double>(stride - 1);
}

/// Row-major coarse grid geometry for an image of width x height pixels.
struct PatchGrid {
  std::size_t width = 0;   // pixels
  std::size_t height = 0;  // pixels

  std::size_t cols() const { return width / kCoarseStride; }
  std::size_t rows() const { return height / kCoarseStride; }
  std::size_t size() const { return cols() * rows(); }
  std::size_t fine_cols() const { return width / kFineStride; }
  std::size_t fine_rows() const { return height / kFineStride; }

  Vec2 patch_center(std::size_t index) const {
    return {cell_center(index % cols(), kCoarseStride), cell_center(index / cols(), kCoarseStride)};
  }

  /// Patch containing pixel position p (half-open cells); nullopt outside.
  std::optional<std::size_t> patch_of(const Vec2& p) const {
    const double gx = std::floor((p.x() + 0.5) / kCoarseStride);
    const double gy = std::floor((p.y() + 0.5) / kCoarseStride);
    if (!(gx >= 0.0) || !(gy >= 0.0) || gx >= static_cast<double>(cols()) ||
        gy >= static_cast<double>(rows())) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(gy) * cols() + static_cast<std::size_t>(gx);
  }

  /// Fine cell (column, row) nearest the center of coarse patch `index`.
  std::pair<std::size_t, std::size_t> fine_anchor(std::size_t index) const {
    return {kFinePerCoarse * (index % cols()) + 1, kFinePerCoarse * (index / cols()) + 1};
  }

  Vec2 fine_center(std::size_t col, std::size_t row) const {
    return {cell_center(col, kFineStride), cell_center(row, kFineStride)};
  }
};

}  // namespace splatloc
