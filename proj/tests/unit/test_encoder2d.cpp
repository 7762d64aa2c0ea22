// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "splatloc/encoder2d.hpp"

using namespace splatloc;

namespace {

ModelParams make_params(const Encoder2dConfig& config, std::uint64_t seed = 1) {
  ModelParams p;
  std::mt19937_64 rng(seed);
  init_encoder2d(p, config, rng);
  return p;
}

Tensor random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(3 * h * w);
  for (auto& x : v) x = n(rng);
  return Tensor::from({3, h, w}, std::move(v));
}

// Largest coarse-feature difference between patches (col, row) of `a` and
// (col + dc, row + dr) of `b`, over patches in [lo, hi) of `a`.
double max_patch_diff(const ImageEncoding& a, const ImageEncoding& b, std::size_t lo,
                      std::size_t hi, std::size_t dc, std::size_t dr) {
  const std::size_t cols = a.grid.cols(), c = a.coarse.dim(1);
  double worst = 0.0;
  for (std::size_t r = lo; r < hi; ++r) {
    for (std::size_t q = lo; q < hi; ++q) {
      for (std::size_t k = 0; k < c; ++k) {
        worst = std::max(worst, std::abs(a.coarse.at(r * cols + q, k) -
                                         b.coarse.at((r + dr) * cols + q + dc, k)));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("encode_image: 480x480 gives 3600 coarse and 57600 fine rows") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  CHECK(params.contains("enc2d.block4.conv2.weight"));
  CHECK(params.contains("enc2d.head_coarse.bias"));
  CHECK(params.contains("enc2d.head_fine.weight"));
  std::mt19937_64 rng(2);
  const ImageEncoding enc = encode_image(random_image(480, 480, rng), params, config);
  CHECK(enc.coarse.dim(0) == 3600);
  CHECK(enc.coarse.dim(1) == config.coarse_dim);
  CHECK(enc.fine.dim(0) == 57600);
  CHECK(enc.fine.dim(1) == config.fine_dim);
  CHECK(enc.grid.size() == 3600);
  for (double v : enc.coarse.data()) REQUIRE(std::isfinite(v));
  for (double v : enc.fine.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("encode_image: non-square shapes follow H/8*W/8 and H/2*W/2") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  std::mt19937_64 rng(3);
  const ImageEncoding enc = encode_image(random_image(24, 40, rng), params, config);
  CHECK(enc.coarse.dim(0) == 3 * 5);
  CHECK(enc.fine.dim(0) == 12 * 20);
  CHECK(enc.grid.cols() == 5);
  CHECK(enc.grid.rows() == 3);
}

TEST_CASE("encode_image rejects sizes not divisible by 8") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  CHECK_THROWS_AS(encode_image(Tensor::zeros({3, 20, 16}), params, config), ArgumentError);
  CHECK_THROWS_AS(encode_image(Tensor::zeros({1, 16, 16}), params, config), ShapeError);
}

TEST_CASE("encode_image: constant image gives equal interior coarse features") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  const ImageEncoding enc = encode_image(Tensor::full({3, 128, 128}, 0.7), params, config);
  // The coarse receptive field spans 75 px, so patches 5..10 of 16 avoid padding.
  const std::size_t ref = 6 * 16 + 6;
  double worst = 0.0;
  for (std::size_t r = 5; r <= 10; ++r) {
    for (std::size_t c = 5; c <= 10; ++c) {
      for (std::size_t k = 0; k < config.coarse_dim; ++k) {
        worst = std::max(worst, std::abs(enc.coarse.at(r * 16 + c, k) - enc.coarse.at(ref, k)));
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("encode_image: shifting the input by 8 px shifts interior coarse rows") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  std::mt19937_64 rng(4);
  const std::size_t s = 128;
  Tensor img = random_image(s, s, rng);
  std::vector<double> shifted(3 * s * s, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 8; y < s; ++y) {
      for (std::size_t x = 8; x < s; ++x) {
        shifted[(c * s + y) * s + x] = img.data()[(c * s + y - 8) * s + x - 8];
      }
    }
  }
  const ImageEncoding a = encode_image(img, params, config);
  const ImageEncoding b = encode_image(Tensor::from({3, s, s}, std::move(shifted)), params, config);
  CHECK(max_patch_diff(a, b, 5, 10, 1, 1) < 1e-4);
}

TEST_CASE("encode_image is deterministic") {
  Encoder2dConfig config;
  const ModelParams params = make_params(config);
  std::mt19937_64 rng(5);
  Tensor img = random_image(32, 32, rng);
  const ImageEncoding a = encode_image(img, params, config);
  const ImageEncoding b = encode_image(img, params, config);
  CHECK(std::equal(a.coarse.data().begin(), a.coarse.data().end(), b.coarse.data().begin()));
  CHECK(std::equal(a.fine.data().begin(), a.fine.data().end(), b.fine.data().begin()));
}

TEST_CASE("preprocess: same-size input is only normalized") {
  Encoder2dConfig config;
  config.image_size = 16;
  Image8 img(16, 16);
  std::mt19937_64 rng(6);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  const Tensor t = preprocess(img, config);
  REQUIRE(t.shape() == Shape{3, 16, 16});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        const double expected = (img.at(x, y, c) / 255.0 - 0.5) / 0.25;
        CHECK(t.data()[(static_cast<std::size_t>(c) * 16 + y) * 16 + x] ==
              doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("preprocess: constant 960x960 image stays constant at 480x480") {
  Encoder2dConfig config;
  ImageF img(960, 960, 3, 0.3);
  const Tensor t = preprocess(img, config);
  REQUIRE(t.shape() == Shape{3, 480, 480});
  for (double v : t.data()) REQUIRE(v == doctest::Approx((0.3 - 0.5) / 0.25).epsilon(1e-12));
}

TEST_CASE("preprocess: 2x2 checkerboard upsampled to 8x8 matches the bilinear oracle") {
  Encoder2dConfig config;
  config.image_size = 8;
  config.mean = {0.0, 0.0, 0.0};
  config.stddev = {1.0, 1.0, 1.0};
  ImageF img(2, 2, 3, 0.0);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 1.0;
    img.at(1, 1, c) = 1.0;
  }
  const Tensor t = preprocess(img, config);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      // Pixel-center alignment: source coordinate (i + 0.5) / 4 - 0.5, clamped.
      const double sx = std::clamp((x + 0.5) / 4.0 - 0.5, 0.0, 1.0);
      const double sy = std::clamp((y + 0.5) / 4.0 - 0.5, 0.0, 1.0);
      const double expected = (1 - sx) * (1 - sy) + sx * sy;
      CHECK(t.data()[static_cast<std::size_t>(y) * 8 + x] ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("preprocess errors") {
  Encoder2dConfig config;
  CHECK_THROWS_AS(preprocess(Image8{}, config), ArgumentError);
  config.image_size = 20;
  CHECK_THROWS_AS(preprocess(Image8(4, 4), config), ConfigError);
}
