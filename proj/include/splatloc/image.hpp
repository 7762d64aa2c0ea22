// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatloc/common.hpp"

namespace splatloc {

/// Interleaved 8-bit RGB image, row-major.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // height * width * 3

  Image8() = default;
  Image8(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool empty() const { return width <= 0 || height <= 0; }
  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Interleaved floating-point image with `channels` channels.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int w, int h, int c = 3, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}
  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return width <= 0 || height <= 0; }
};

/// Scales 8-bit values to [0, 1].
ImageF to_float(const Image8& image);
/// Rounds and clamps [0, 1] values to 8 bits (3-channel input).
Image8 to_8bit(const ImageF& image);

/// Bilinear resampling with pixel-center alignment and edge clamping.
ImageF resize_bilinear(const ImageF& image, int width, int height);

/// Bilinear sample at continuous pixel coordinates (centers at integers),
/// edge-clamped.
double sample_bilinear(const ImageF& image, double x, double y, int channel);

/// Reads 8-bit RGB PNG (gray/alpha variants converted) or binary PPM (P6).
Image8 read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
void write_ppm(const std::filesystem::path& path, const Image8& image);
/// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& values);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& width, int& height);

}  // namespace splatloc
