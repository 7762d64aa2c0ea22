// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "gradcheck.hpp"
#include "splatloc/alignment.hpp"
#include "splatloc/layers.hpp"

using namespace splatloc;
using splatloc::testing::gradcheck;
using splatloc::testing::random_tensor;
using splatloc::testing::weighted_sum;

namespace {

using Mat = Eigen::MatrixXd;

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = t.data()[static_cast<std::size_t>(i * m.cols() + j)];
  }
  return m;
}

Mat oracle_linear(const Mat& x, const ModelParams& p, const std::string& prefix) {
  const Tensor& w = p.get(prefix + ".weight");
  const Tensor& b = p.get(prefix + ".bias");
  Mat out = x * to_mat(w);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j).array() += b.data()[static_cast<std::size_t>(j)];
  return out;
}

Mat oracle_norm(const Mat& x, const ModelParams& p, const std::string& prefix) {
  const auto g = p.get(prefix + ".gamma").data();
  const auto b = p.get(prefix + ".beta").data();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * g[static_cast<std::size_t>(j)] +
                  b[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

Mat row_softmax(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd e = (m.row(i).array() - m.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

// Dense reference for a post-norm multi-head block.
Mat oracle_block(const Mat& q_in, const Mat& ctx, const ModelParams& p, const std::string& prefix,
                 int heads) {
  const Mat q = oracle_linear(q_in, p, prefix + ".wq");
  const Mat k = oracle_linear(ctx, p, prefix + ".wk");
  const Mat v = oracle_linear(ctx, p, prefix + ".wv");
  const int d = static_cast<int>(q.cols()) / heads;
  Mat mixed(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    const Mat a = row_softmax(q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose() /
                              std::sqrt(static_cast<double>(d)));
    mixed.middleCols(h * d, d) = a * v.middleCols(h * d, d);
  }
  const Mat x1 = oracle_norm(q_in + oracle_linear(mixed, p, prefix + ".wo"), p, prefix + ".ln1");
  const Mat ff =
      oracle_linear(oracle_linear(x1, p, prefix + ".ff1").cwiseMax(0.0), p, prefix + ".ff2");
  return oracle_norm(x1 + ff, p, prefix + ".ln2");
}

// Random layer-norm affine parameters so the oracle exercises them.
ModelParams block_params(std::size_t dim, std::uint64_t seed) {
  ModelParams p;
  std::mt19937_64 rng(seed);
  init_attention_block(p, "blk", dim, 2, rng);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (const char* ln : {"blk.ln1.gamma", "blk.ln2.gamma"}) {
    Tensor gamma = p.get(ln);  // shared handle, edits the stored weight
    for (auto& g : gamma.mutable_data()) g = u(rng);
  }
  return p;
}

}  // namespace

TEST_CASE("linear applies weight and bias along the last axis") {
  ModelParams p;
  p.add("l.weight", Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  p.add("l.bias", Tensor::from({3}, {0.5, -1, 2}));
  Tensor y = linear(Tensor::from({2, 1, 2}, {1, 1, 0, 2}), p, "l");
  CHECK(y.shape() == Shape{2, 1, 3});
  const std::vector<double> expected{5.5, 6, 11, 8.5, 9, 14};
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == doctest::Approx(expected[i]));
  CHECK_THROWS_AS(linear(Tensor::zeros({2, 3}), p, "l"), ShapeError);
}

TEST_CASE("attention_block matches a dense multi-head oracle") {
  std::mt19937_64 rng(1);
  const ModelParams p = block_params(8, 2);
  for (int heads : {1, 2, 4}) {
    Tensor q = random_tensor({4, 8}, rng);
    Tensor ctx = random_tensor({5, 8}, rng);
    const AttentionOutput out = attention_block(q, ctx, p, "blk", static_cast<std::size_t>(heads));
    const Mat expected = oracle_block(to_mat(q), to_mat(ctx), p, "blk", heads);
    CHECK((to_mat(out.output) - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.weights.shape() == Shape{static_cast<std::size_t>(heads), 4, 5});
  }
}

TEST_CASE("attention_block: a single token attends only to itself") {
  std::mt19937_64 rng(3);
  const ModelParams p = block_params(8, 4);
  Tensor x = random_tensor({1, 8}, rng);
  const AttentionOutput out = attention_block(x, x, p, "blk", 2);
  for (double w : out.weights.data()) CHECK(w == doctest::Approx(1.0));
  // Residual path: x1 = LN(x + Wo(Wv x)), out = LN(x1 + FF(x1)).
  const Mat xm = to_mat(x);
  const Mat x1 =
      oracle_norm(xm + oracle_linear(oracle_linear(xm, p, "blk.wv"), p, "blk.wo"), p, "blk.ln1");
  const Mat ff = oracle_linear(oracle_linear(x1, p, "blk.ff1").cwiseMax(0.0), p, "blk.ff2");
  CHECK((to_mat(out.output) - oracle_norm(x1 + ff, p, "blk.ln2")).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention_block: identical keys split attention evenly") {
  std::mt19937_64 rng(5);
  const ModelParams p = block_params(8, 6);
  Tensor row = random_tensor({1, 8}, rng);
  Tensor ctx = concat(std::vector<Tensor>{row, row}, 0);
  const AttentionOutput out = attention_block(random_tensor({3, 8}, rng), ctx, p, "blk", 4);
  for (double w : out.weights.data()) CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention_block: heads must divide the dimension") {
  const ModelParams p = block_params(8, 7);
  CHECK_THROWS_AS(attention_block(Tensor::zeros({2, 8}), Tensor::zeros({2, 8}), p, "blk", 3),
                  ConfigError);
  ModelParams q;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(init_alignment(q, AlignmentConfig{1, 3, 2}, 8, rng), ConfigError);
}

TEST_CASE("attention weights sum to one and outputs have unit-scale rows") {
  std::mt19937_64 rng(9);
  const ModelParams p = block_params(16, 10);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = random_tensor({7, 16}, rng, -3.0, 3.0);
    Tensor ctx = random_tensor({11, 16}, rng, -3.0, 3.0);
    const AttentionOutput out = attention_block(q, ctx, p, "blk", 4);
    const auto w = out.weights.data();
    for (std::size_t r = 0; r < 4 * 7; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 11; ++c) s += w[r * 11 + c];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  // Default unit gamma: layer norm keeps per-row RMS near one.
  ModelParams plain;
  std::mt19937_64 init(11);
  init_attention_block(plain, "blk", 16, 2, init);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat out = to_mat(attention_block(random_tensor({5, 16}, rng, -5, 5),
                                           random_tensor({6, 16}, rng, -5, 5), plain, "blk", 4)
                               .output);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double rms = std::sqrt(out.row(i).squaredNorm() / 16.0);
      CHECK(rms >= 0.5);
      CHECK(rms <= 2.0);
    }
  }
}

TEST_CASE("batched_self_attention equals per-item attention_block with one head") {
  std::mt19937_64 rng(12);
  const ModelParams p = block_params(6, 13);
  Tensor tokens = random_tensor({3, 5, 6}, rng);
  const AttentionOutput out = batched_self_attention(tokens, p, "blk");
  REQUIRE(out.output.shape() == Shape{3, 5, 6});
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> v(tokens.data().begin() + b * 30, tokens.data().begin() + (b + 1) * 30);
    Tensor item = Tensor::from({5, 6}, std::move(v));
    const Tensor single = attention_block(item, item, p, "blk", 1).output;
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(out.output.data()[b * 30 + i] == doctest::Approx(single.data()[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(batched_self_attention(Tensor::zeros({5, 6}), p, "blk"), ShapeError);
}

TEST_CASE("attention gradients match finite differences") {
  std::mt19937_64 rng(14);
  const ModelParams p = block_params(4, 15);
  Tensor q = random_tensor({3, 4}, rng);
  Tensor ctx = random_tensor({2, 4}, rng);
  Tensor wq = p.get("blk.wq.weight").clone();
  Tensor ff1 = p.get("blk.ff1.weight").clone();
  auto swap_weights = [&](const std::vector<Tensor>& in) {
    ModelParams local;
    for (const auto& [name, t] : p.weights()) {
      if (name == "blk.wq.weight")
        local.add(name, in[2]);
      else if (name == "blk.ff1.weight")
        local.add(name, in[3]);
      else
        local.add(name, t);
    }
    return local;
  };
  const auto r = gradcheck(
      [&](const std::vector<Tensor>& in) {
        const ModelParams local = swap_weights(in);
        return weighted_sum(attention_block(in[0], in[1], local, "blk", 2).output);
      },
      {q, ctx, wq, ff1});
  CHECK(r.max_rel_error < 1e-4);

  Tensor tokens = random_tensor({2, 3, 4}, rng);
  const auto rb = gradcheck(
      [&](const std::vector<Tensor>& in) {
        const ModelParams local = swap_weights(in);
        return weighted_sum(batched_self_attention(in[0], local, "blk").output);
      },
      {tokens, Tensor::zeros({1}), wq, ff1});
  CHECK(rb.max_rel_error < 1e-4);
}

TEST_CASE("sinusoidal encoding layout") {
  Eigen::MatrixXd c(2, 2);
  c << 0.0, 1.0, 0.25, 0.5;
  const Tensor e = sinusoidal_encoding(c, 10);  // 2 frequencies per axis, 2 spare columns
  REQUIRE(e.shape() == Shape{2, 10});
  const double pi = std::acos(-1.0);
  const double omegas[2] = {pi, 64.0 * pi};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t f = 0; f < 2; ++f) {
        const double phase =
            omegas[f] * c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
        CHECK(e.at(i, (a * 2 + f) * 2) == doctest::Approx(std::sin(phase)));
        CHECK(e.at(i, (a * 2 + f) * 2 + 1) == doctest::Approx(std::cos(phase)));
      }
    }
    CHECK(e.at(i, 8) == 0.0);
    CHECK(e.at(i, 9) == 0.0);
  }
}

TEST_CASE("point positional encoding normalizes per axis") {
  Eigen::MatrixX3d p(2, 3);
  p << 0, 5, 2, 10, 5, 4;
  Eigen::MatrixXd unit(2, 3);
  unit << 0, 0.5, 0, 1, 0.5, 1;
  const Tensor a = point_positional_encoding(p, 12);
  const Tensor b = sinusoidal_encoding(unit, 12);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

namespace {

struct AlignFixture {
  AlignmentConfig config{2, 4, 2};
  std::size_t dim = 16;
  ModelParams params;
  PatchGrid grid{32, 24};
  Eigen::MatrixX3d points;
  Tensor scene, image;

  explicit AlignFixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    init_alignment(params, config, dim, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    points.resize(9, 3);
    for (Eigen::Index i = 0; i < 9; ++i) points.row(i) << u(rng), u(rng), u(rng);
    scene = random_tensor({9, dim}, rng);
    image = random_tensor({grid.size(), dim}, rng);
  }
};

}  // namespace

TEST_CASE("align preserves shapes and registers every layer") {
  AlignFixture f(1);
  CHECK(f.params.contains("align.layer1.self3d.wq.weight"));
  CHECK(f.params.contains("align.layer2.cross2d.ln2.beta"));
  const AlignedFeatures out = align(f.scene, f.points, f.image, f.grid, f.params, f.config);
  CHECK(out.scene.shape() == f.scene.shape());
  CHECK(out.image.shape() == f.image.shape());
  for (double v : out.scene.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("align is equivariant to permuting scene rows with their anchors") {
  AlignFixture f(2);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixX3d pp(9, 3);
  for (std::size_t i = 0; i < 9; ++i)
    pp.row(static_cast<Eigen::Index>(i)) = f.points.row(static_cast<Eigen::Index>(perm[i]));
  const AlignedFeatures a = align(f.scene, f.points, f.image, f.grid, f.params, f.config);
  const AlignedFeatures b =
      align(gather_rows(f.scene, perm), pp, f.image, f.grid, f.params, f.config);
  double worst = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t c = 0; c < f.dim; ++c)
      worst = std::max(worst, std::abs(b.scene.at(i, c) - a.scene.at(perm[i], c)));
  }
  for (std::size_t i = 0; i < f.image.numel(); ++i) {
    worst = std::max(worst, std::abs(a.image.data()[i] - b.image.data()[i]));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("align: zeroed cross-attention output makes the image stream scene-independent") {
  AlignFixture f(4);
  for (std::size_t l = 1; l <= f.config.layers; ++l) {
    Tensor w = f.params.get(fmt::format("align.layer{}.cross2d.wo.weight", l));
    std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  }
  const AlignedFeatures a = align(f.scene, f.points, f.image, f.grid, f.params, f.config);
  std::mt19937_64 rng(5);
  const AlignedFeatures b =
      align(random_tensor({9, f.dim}, rng), f.points, f.image, f.grid, f.params, f.config);
  CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
}
