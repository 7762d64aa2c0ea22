// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/encoder2d.hpp"

#include <cmath>

#include <fmt/format.h>

namespace splatloc {
namespace {

std::string name(const std::string& prefix, const char* what) {
  return fmt::format("enc2d.{}.{}", prefix, what);
}

Tensor conv(const ModelParams& p, const std::string& prefix, const Tensor& x, std::size_t stride,
            std::size_t padding) {
  return conv2d(x, p.get(name(prefix, "weight")), p.get(name(prefix, "bias")), stride, padding);
}

Tensor block(const ModelParams& p, int index, const Tensor& x, bool downsample) {
  const std::string b = fmt::format("block{}", index);
  Tensor y = relu(conv(p, b + ".conv1", x, downsample ? 2 : 1, 1));
  y = conv(p, b + ".conv2", y, 1, 1);
  Tensor skip = downsample ? conv(p, b + ".skip", max_pool2d(x, 2, 2), 1, 0) : x;
  return relu(add(y, skip));
}

// [C, H, W] -> [H*W, C]
Tensor to_rows(const Tensor& x) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {c, hw}));
}

void add_conv(ModelParams& p, const std::string& prefix, std::size_t cin, std::size_t cout,
              std::size_t k, std::mt19937_64& rng, double gain = 2.0) {
  const double stddev = std::sqrt(gain / static_cast<double>(cin * k * k));
  p.add_normal(name(prefix, "weight"), {cout, cin, k, k}, stddev, rng);
  p.add_constant(name(prefix, "bias"), {cout}, 0.0);
}

}  // namespace

Tensor preprocess(const ImageF& image, const Encoder2dConfig& config) {
  if (image.empty()) throw ArgumentError("preprocess: zero-sized image");
  if (image.channels != 3) throw ArgumentError("preprocess: expected 3 channels");
  const int s = config.image_size;
  if (s <= 0 || s % static_cast<int>(kCoarseStride) != 0) {
    throw ConfigError(fmt::format("image size {} must be a positive multiple of 8", s));
  }
  const ImageF resized = resize_bilinear(image, s, s);
  const std::size_t n = static_cast<std::size_t>(s) * s;
  std::vector<double> v(3 * n);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        v[c * n + static_cast<std::size_t>(y) * s + x] =
            (resized.at(x, y, c) - config.mean[c]) / config.stddev[c];
      }
    }
  }
  return Tensor::from({3, static_cast<std::size_t>(s), static_cast<std::size_t>(s)}, std::move(v));
}

Tensor preprocess(const Image8& image, const Encoder2dConfig& config) {
  if (image.empty()) throw ArgumentError("preprocess: zero-sized image");
  return preprocess(to_float(image), config);
}

ImageEncoding encode_image(const Tensor& image, const ModelParams& params,
                           const Encoder2dConfig& /*config*/) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(
        fmt::format("encode_image: expected [3,H,W], got {}", shape_to_string(image.shape())));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h % kCoarseStride != 0 || w % kCoarseStride != 0 || h == 0 || w == 0) {
    throw ArgumentError(fmt::format("encode_image: {}x{} is not divisible by 8", w, h));
  }
  Tensor b1 = block(params, 1, image, true);
  Tensor b2 = block(params, 2, b1, true);
  Tensor b3 = block(params, 3, b2, true);
  Tensor b4 = block(params, 4, b3, false);
  ImageEncoding out;
  out.fine = to_rows(conv(params, "head_fine", b1, 1, 0));
  out.coarse = to_rows(conv(params, "head_coarse", b4, 1, 0));
  out.grid = {w, h};
  return out;
}

void init_encoder2d(ModelParams& params, const Encoder2dConfig& config, std::mt19937_64& rng) {
  const auto& ch = config.block_channels;
  if (ch[3] != ch[2]) throw ConfigError("enc2d: block 4 is residual and keeps its width");
  std::size_t cin = 3;
  for (int b = 0; b < 4; ++b) {
    const std::string prefix = fmt::format("block{}", b + 1);
    add_conv(params, prefix + ".conv1", cin, ch[b], 3, rng);
    add_conv(params, prefix + ".conv2", ch[b], ch[b], 3, rng, 1.0);
    if (b < 3) add_conv(params, prefix + ".skip", cin, ch[b], 1, rng, 1.0);
    cin = ch[b];
  }
  add_conv(params, "head_fine", ch[0], config.fine_dim, 1, rng, 1.0);
  add_conv(params, "head_coarse", ch[3], config.coarse_dim, 1, rng, 1.0);
}

}  // namespace splatloc
