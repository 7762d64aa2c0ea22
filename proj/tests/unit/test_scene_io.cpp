// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "splatloc/scene_io.hpp"

using namespace splatloc;

namespace {

const std::filesystem::path kFixtures = SPLATLOC_FIXTURE_DIR;

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Gaussian gaussian_with_logit(double logit_value) {
  Gaussian g;
  g.opacity_logit = logit_value;
  return g;
}

}  // namespace

TEST_CASE("one-vertex file from the byte-level generator") {
  const GaussianScene s = load_ply(kFixtures / "one_vertex.ply");
  REQUIRE(s.size() == 1);
  const Gaussian& g = s.gaussians()[0];
  CHECK(g.position == Vec3(1, 2, 3));
  CHECK(g.opacity() == doctest::Approx(1.0 / (1.0 + std::exp(-2.1972))).epsilon(1e-7));
  CHECK(g.opacity() == doctest::Approx(0.9).epsilon(1e-4));
  CHECK(s.bbox().min == Vec3(1, 2, 3));
  CHECK(s.bbox().max == Vec3(1, 2, 3));
}

TEST_CASE("empty vertex block loads and is rejected at pipeline entry") {
  const GaussianScene s = load_ply(kFixtures / "empty.ply");
  CHECK(s.empty());
  CHECK_THROWS_AS(require_nonempty(s, "encode"), DataError);
}

TEST_CASE("malformed files raise the documented errors") {
  try {
    load_ply(kFixtures / "missing_opacity.ply");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("missing property opacity") != std::string::npos);
  }
  CHECK_THROWS_AS(load_ply(kFixtures / "ascii.ply"), UnsupportedFormatError);
  CHECK_THROWS_AS(load_ply(kFixtures / "big_endian.ply"), UnsupportedFormatError);
  CHECK_THROWS_AS(load_ply(kFixtures / "truncated.ply"), IoError);
  CHECK_THROWS_AS(load_ply(kFixtures / "does_not_exist.ply"), IoError);
}

TEST_CASE("loaded vertices re-serialize to the original payload") {
  const GaussianScene s = load_ply(kFixtures / "random37.ply");
  REQUIRE(s.size() == 37);
  // Test-only writer: vanilla property order, normals zero.
  std::string bytes;
  auto put = [&](double v) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    bytes.append(b, 4);
  };
  for (const Gaussian& g : s.gaussians()) {
    for (int i = 0; i < 3; ++i) put(g.position[i]);
    for (int i = 0; i < 3; ++i) put(0.0);
    for (double c : g.sh) put(c);
    put(g.opacity_logit);
    for (int i = 0; i < 3; ++i) put(g.log_scale[i]);
    for (int i = 0; i < 4; ++i) put(g.rotation[i]);
  }
  // The generator writes random normals; compare everything but those.
  const std::string original = read_bytes(kFixtures / "random37.vertex.bin");
  REQUIRE(original.size() == bytes.size());
  const std::size_t stride = 62 * 4;
  for (std::size_t r = 0; r < 37; ++r) {
    const std::size_t base = r * stride;
    CHECK(original.compare(base, 12, bytes, base, 12) == 0);
    CHECK(original.compare(base + 24, stride - 24, bytes, base + 24, stride - 24) == 0);
  }
}

TEST_CASE("save_ply round trip preserves float32 values") {
  const GaussianScene s = load_ply(kFixtures / "random37.ply");
  const auto path = std::filesystem::temp_directory_path() / "splatloc_roundtrip.ply";
  save_ply(path, s);
  const GaussianScene t = load_ply(path);
  REQUIRE(t.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(t.gaussians()[i].position == s.gaussians()[i].position);
    CHECK(t.gaussians()[i].sh == s.gaussians()[i].sh);
    CHECK(t.gaussians()[i].rotation == s.gaussians()[i].rotation);
  }
}

TEST_CASE("opacity filter") {
  std::vector<Gaussian> high(5, gaussian_with_logit(logit(0.95)));
  CHECK(filter_by_opacity(GaussianScene(high)).size() == 5);
  std::vector<Gaussian> low(5, gaussian_with_logit(0.0));
  CHECK(filter_by_opacity(GaussianScene(low)).empty());

  const std::vector<double> logits{-1.0, 2.1972, 3.0, 2.1973};
  std::vector<Gaussian> mixed;
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    mixed.push_back(gaussian_with_logit(logits[i]));
    mixed.back().position = {double(i), 0, 0};
    // Independent per-element evaluation: 2.1972 is just below ln 9, so its
    // activated opacity is 0.899998 and it falls under the threshold.
    if (1.0 / (1.0 + std::exp(-logits[i])) >= 0.9) expected.push_back(i);
  }
  CHECK(expected == std::vector<std::size_t>{2, 3});
  const GaussianScene f = filter_by_opacity(GaussianScene(mixed), 0.9);
  REQUIRE(f.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(f.gaussians()[k].position.x() == double(expected[k]));
  }
  // Idempotent.
  CHECK(filter_by_opacity(f, 0.9).size() == 2);
  CHECK_THROWS_AS(filter_by_opacity(f, 1.5), ArgumentError);
}

TEST_CASE("uniform subsampling") {
  std::vector<Gaussian> gs(500);
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i].position = {double(i), 0, 0};
  const GaussianScene s(gs);
  CHECK(subsample_uniform(s, 100000, 1).size() == 500);

  const auto a = subsample_indices(500, 50, 9);
  const auto b = subsample_indices(500, 50, 9);
  CHECK(a == b);
  CHECK(a.size() == 50);
  CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 50);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(subsample_indices(500, 50, 10) != a);

  const GaussianScene sub = subsample_uniform(s, 50, 9);
  for (std::size_t i = 0; i < sub.size(); ++i) {
    CHECK(sub.gaussians()[i].position.x() == double(a[i]));
  }
}

TEST_CASE("subsampling is spatially uniform (chi-square over 64 cells)") {
  const std::size_t total = 1'000'000, draws = 100'000;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> cell(total);
  std::vector<double> population(64, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    const int cx = static_cast<int>(u(rng) * 4), cy = static_cast<int>(u(rng) * 4),
              cz = static_cast<int>(u(rng) * 4);
    cell[i] = (cx * 4 + cy) * 4 + cz;
    population[cell[i]] += 1.0;
  }
  std::vector<double> observed(64, 0.0);
  for (std::size_t idx : subsample_indices(total, draws, 77)) observed[cell[idx]] += 1.0;
  double chi2 = 0.0;
  for (int c = 0; c < 64; ++c) {
    const double expected = population[c] * static_cast<double>(draws) / total;
    chi2 += (observed[c] - expected) * (observed[c] - expected) / expected;
  }
  // 0.999 quantile of chi-square with 63 degrees of freedom.
  CHECK(chi2 < 103.442);
}

TEST_CASE("encoder input features") {
  Gaussian g;
  const Eigen::MatrixXd f = gaussian_input_features(GaussianScene({g}));
  REQUIRE(f.rows() == 1);
  REQUIRE(f.cols() == 56);
  CHECK(f(0, 0) == 0.5);
  for (int i = 1; i < 49; ++i) CHECK(f(0, i) == 0.0);
  CHECK(f(0, 49) == 1.0);
  CHECK(f(0, 50) == 0.0);
  CHECK(f(0, 53) == 1.0);
  CHECK(f(0, 55) == 1.0);

  Gaussian q;
  q.rotation = {2, 0, 0, 0};
  const Eigen::MatrixXd fq = gaussian_input_features(GaussianScene({q}));
  CHECK(fq(0, 49) == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Gaussian r;
  r.opacity_logit = u(rng);
  for (auto& c : r.sh) c = u(rng);
  r.rotation = {u(rng), u(rng), u(rng), u(rng)};
  r.log_scale = {u(rng), u(rng), u(rng)};
  const Eigen::MatrixXd fr = gaussian_input_features(GaussianScene({r}));
  CHECK(fr(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-r.opacity_logit))));
  for (int i = 0; i < 48; ++i) CHECK(fr(0, 1 + i) == r.sh[i]);
  const double qn = std::sqrt(r.rotation.squaredNorm());
  for (int i = 0; i < 4; ++i) CHECK(fr(0, 49 + i) == doctest::Approx(r.rotation[i] / qn));
  for (int i = 0; i < 3; ++i) CHECK(fr(0, 53 + i) == doctest::Approx(std::exp(r.log_scale[i])));

  Gaussian bad;
  bad.position.x() = std::nan("");
  CHECK_THROWS_AS(gaussian_input_features(GaussianScene({Gaussian{}, bad})), DataError);
  CHECK_THROWS_AS(gaussian_input_features(GaussianScene()), DataError);
}
