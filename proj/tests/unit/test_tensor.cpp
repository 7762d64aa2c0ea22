// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "gradcheck.hpp"
#include "splatloc/tensor.hpp"

using namespace splatloc;
using splatloc::testing::gradcheck;
using splatloc::testing::random_tensor;
using splatloc::testing::random_tensor_away_from_zero;
using splatloc::testing::weighted_sum;

namespace {

constexpr double kTol = 1e-4;

void check(const splatloc::testing::LossFn& fn, std::vector<Tensor> inputs) {
  const auto r = gradcheck(fn, std::move(inputs));
  INFO("input " << r.input << " element " << r.element << " analytic " << r.analytic << " numeric "
                << r.numeric);
  CHECK(r.max_rel_error < kTol);
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x = Tensor::zeros({3});
  Tensor y = softmax(x, 0);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax rows sum to one along any axis") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({3, 4, 5}, rng, -5.0, 5.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = softmax(x, axis);
    const auto& s = y.shape();
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < 3; ++a) inner *= s[a];
    const std::size_t outer = y.numel() / (inner * s[axis]);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < s[axis]; ++k) {
          const double v = y.data()[(o * s[axis] + k) * inner + i];
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("matmul by identity returns the operand") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({4, 3}, rng);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  Tensor y = matmul(Tensor::from({4, 4}, eye), a);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(y.data()[i] == a.data()[i]);
}

TEST_CASE("conv2d matches a nested-loop oracle") {
  // 5x5 ramp, all-ones 3x3 kernel, zero padding 1.
  std::vector<double> img(25);
  for (int i = 0; i < 25; ++i) img[i] = i;
  Tensor x = Tensor::from({1, 5, 5}, img);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 1);
  REQUIRE(y.shape() == Shape{1, 5, 5});
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      double expect = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < 5 && cc >= 0 && cc < 5) expect += img[rr * 5 + cc];
        }
      }
      CHECK(y.data()[r * 5 + c] == doctest::Approx(expect));
    }
  }
  // Stride 2 without padding picks the top-left aligned windows.
  Tensor y2 = conv2d(x, w, Tensor(), 2, 0);
  REQUIRE(y2.shape() == Shape{1, 2, 2});
  CHECK(y2.data()[0] == doctest::Approx(0 + 1 + 2 + 5 + 6 + 7 + 10 + 11 + 12));
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("backward of x squared") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("sum of softmax has zero gradient") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({6}, rng);
  x.set_requires_grad(true);
  backward(sum(softmax(x, 0)));
  for (double g : x.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("non-scalar loss is rejected") {
  Tensor x = Tensor::zeros({2}, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), ArgumentError);
}

TEST_CASE("unreachable leaves get zero gradients after zero_grad") {
  Tensor used = Tensor::from({1}, {2.0}, true);
  Tensor unused = Tensor::from({1}, {5.0}, true);
  unused.zero_grad();
  backward(sum(mul(used, used)));
  REQUIRE(unused.has_grad());
  CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor x = Tensor::from({1}, {1.0}, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradient checks for every op") {
  std::mt19937_64 rng(42);

  SUBCASE("matmul") {
    check([](const auto& in) { return weighted_sum(matmul(in[0], in[1])); },
          {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  }
  SUBCASE("bmm") {
    check([](const auto& in) { return weighted_sum(bmm(in[0], in[1])); },
          {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 5}, rng)});
    check([](const auto& in) { return weighted_sum(bmm(in[0], in[1], true)); },
          {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)});
  }
  SUBCASE("add sub mul") {
    check([](const auto& in) { return weighted_sum(mul(add(in[0], in[1]), sub(in[0], in[1]))); },
          {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)});
  }
  SUBCASE("add_bias and scale") {
    check([](const auto& in) { return weighted_sum(scale(add_bias(in[0], in[1]), -1.7)); },
          {random_tensor({2, 3, 4}, rng), random_tensor({4}, rng)});
  }
  SUBCASE("relu and leaky_relu") {
    check([](const auto& in) { return weighted_sum(relu(in[0])); },
          {random_tensor_away_from_zero({5, 4}, rng)});
    check([](const auto& in) { return weighted_sum(leaky_relu(in[0], 0.1)); },
          {random_tensor_away_from_zero({5, 4}, rng)});
  }
  SUBCASE("softmax on each axis") {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      check([axis](const auto& in) { return weighted_sum(softmax(in[0], axis)); },
            {random_tensor({2, 3, 4}, rng, -2.0, 2.0)});
    }
  }
  SUBCASE("layer_norm") {
    check([](const auto& in) { return weighted_sum(layer_norm(in[0], in[1], in[2])); },
          {random_tensor({4, 6}, rng), random_tensor({6}, rng, 0.5, 1.5), random_tensor({6}, rng)});
  }
  SUBCASE("conv2d") {
    check(
        [](const auto& in) { return weighted_sum(conv2d(in[0], in[1], in[2], 2, 1)); },
        {random_tensor({2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    check([](const auto& in) { return weighted_sum(conv2d(in[0], in[1], Tensor(), 1, 0)); },
          {random_tensor({2, 4, 4}, rng), random_tensor({2, 2, 1, 1}, rng)});
  }
  SUBCASE("max_pool2d") {
    // Distinct values keep the argmax away from ties.
    std::vector<double> v(2 * 4 * 4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), rng);
    check([](const auto& in) { return weighted_sum(max_pool2d(in[0], 2, 2)); },
          {Tensor::from({2, 4, 4}, v)});
  }
  SUBCASE("gather_rows and gather_elements") {
    const std::vector<std::size_t> rows{2, 0, 2, 1};
    check([rows](const auto& in) { return weighted_sum(gather_rows(in[0], rows)); },
          {random_tensor({3, 4}, rng)});
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {2, 3}, {0, 1}};
    check([pairs](const auto& in) { return weighted_sum(gather_elements(in[0], pairs)); },
          {random_tensor({3, 4}, rng)});
  }
  SUBCASE("concat") {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      check(
          [axis](const auto& in) {
            std::vector<Tensor> parts{in[0], in[1]};
            return weighted_sum(concat(parts, axis));
          },
          {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)});
    }
  }
  SUBCASE("reshape transpose swap_leading") {
    check([](const auto& in) { return weighted_sum(transpose(reshape(in[0], {4, 3}))); },
          {random_tensor({2, 6}, rng)});
    check([](const auto& in) { return weighted_sum(swap_leading(in[0])); },
          {random_tensor({2, 3, 4}, rng)});
  }
  SUBCASE("sparse_mm") {
    auto m = std::make_shared<SparseMatrix>(3, 4);
    std::vector<Eigen::Triplet<double>> trips{{0, 0, 0.5}, {0, 3, -1.0}, {2, 1, 2.0}, {2, 2, 0.25}};
    m->setFromTriplets(trips.begin(), trips.end());
    std::shared_ptr<const SparseMatrix> cm = m;
    check([cm](const auto& in) { return weighted_sum(sparse_mm(cm, in[0])); },
          {random_tensor({4, 2}, rng)});
  }
  SUBCASE("normalize_rows and row_norm") {
    check([](const auto& in) { return weighted_sum(normalize_rows(in[0])); },
          {random_tensor({4, 3}, rng)});
    check([](const auto& in) { return weighted_sum(row_norm(in[0])); },
          {random_tensor({4, 3}, rng)});
  }
  SUBCASE("log_clamped sum mean") {
    check([](const auto& in) { return weighted_sum(log_clamped(in[0], 1e-12)); },
          {random_tensor({5}, rng, 0.2, 2.0)});
    check([](const auto& in) { return mean(mul(in[0], in[0])); }, {random_tensor({3, 2}, rng)});
  }
  SUBCASE("random three-layer composite") {
    check(
        [](const auto& in) {
          Tensor h = leaky_relu(add_bias(matmul(in[0], in[1]), in[2]));
          h = layer_norm(h, in[3], in[4]);
          h = softmax(matmul(h, in[5]), 1);
          return weighted_sum(h);
        },
        {random_tensor({4, 5}, rng), random_tensor({5, 6}, rng), random_tensor({6}, rng),
         random_tensor({6}, rng, 0.5, 1.5), random_tensor({6}, rng), random_tensor({6, 3}, rng)});
  }
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 a(7), b(7);
  Tensor x = random_tensor({3, 3}, a);
  Tensor y = random_tensor({3, 3}, b);
  Tensor fx = softmax(matmul(x, x), 1);
  Tensor fy = softmax(matmul(y, y), 1);
  for (std::size_t i = 0; i < fx.numel(); ++i) CHECK(fx.data()[i] == fy.data()[i]);
}
