// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <random>

#include "splatloc/image.hpp"

using namespace splatloc;

namespace {

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "splatloc_test_image";
  std::filesystem::create_directories(d);
  return d;
}

Image8 random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

}  // namespace

TEST_CASE("bilinear upsampling of a 2x2 checkerboard") {
  ImageF src(2, 2, 1);
  src.at(1, 0) = 1.0;
  src.at(0, 1) = 1.0;
  const ImageF up = resize_bilinear(src, 4, 4);
  // Destination pixel x samples source coordinate clamp(x/2 - 1/4, 0, 1).
  const double w[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const double expect = w[x] * (1 - w[y]) + (1 - w[x]) * w[y];
      CHECK(up.at(x, y) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("bilinear resize of a constant image stays constant") {
  ImageF src(96, 96, 3, 0.3);
  const ImageF down = resize_bilinear(src, 48, 48);
  for (double v : down.data) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(resize_bilinear(ImageF(), 4, 4), ArgumentError);
}

TEST_CASE("png and ppm round trips") {
  const Image8 img = random_image(13, 7, 4);
  write_png(temp_dir() / "a.png", img);
  CHECK(read_image(temp_dir() / "a.png") == img);
  write_ppm(temp_dir() / "a.ppm", img);
  CHECK(read_image(temp_dir() / "a.ppm") == img);
}

TEST_CASE("16-bit pgm round trip") {
  std::vector<std::uint16_t> v{0, 1, 256, 65535, 1234, 4321};
  write_pgm16(temp_dir() / "d.pgm", 3, 2, v);
  int w = 0, h = 0;
  CHECK(read_pgm16(temp_dir() / "d.pgm", w, h) == v);
  CHECK(w == 3);
  CHECK(h == 2);
}

TEST_CASE("float conversion round trip") {
  const Image8 img = random_image(5, 5, 9);
  CHECK(to_8bit(to_float(img)) == img);
}
