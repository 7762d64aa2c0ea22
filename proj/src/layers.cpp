// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/layers.hpp"

#include <cmath>

#include <fmt/format.h>

namespace splatloc {

Tensor linear(const Tensor& x, const ModelParams& params, const std::string& prefix) {
  const Tensor& weight = params.get(prefix + ".weight");
  const std::size_t cin = weight.dim(0), cout = weight.dim(1);
  Shape out_shape = x.shape();
  if (out_shape.empty() || out_shape.back() != cin) {
    throw ShapeError(fmt::format("linear {}: incompatible shapes {} and {}", prefix,
                                 shape_to_string(x.shape()), shape_to_string(weight.shape())));
  }
  out_shape.back() = cout;
  Tensor flat = x.rank() == 2 ? x : reshape(x, {x.numel() / cin, cin});
  Tensor y = add_bias(matmul(flat, weight), params.get(prefix + ".bias"));
  return x.rank() == 2 ? y : reshape(y, std::move(out_shape));
}

void init_linear(ModelParams& params, const std::string& prefix, std::size_t cin, std::size_t cout,
                 std::mt19937_64& rng, double gain) {
  params.add_normal(prefix + ".weight", {cin, cout}, std::sqrt(gain / static_cast<double>(cin)),
                    rng);
  params.add_constant(prefix + ".bias", {cout}, 0.0);
}

}  // namespace splatloc
