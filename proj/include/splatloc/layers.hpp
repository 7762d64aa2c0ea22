// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "splatloc/params.hpp"
#include "splatloc/tensor.hpp"

namespace splatloc {

/// x[..., Cin] times prefix.weight [Cin, Cout] plus prefix.bias [Cout].
Tensor linear(const Tensor& x, const ModelParams& params, const std::string& prefix);

/// Normal(0, sqrt(gain / Cin)) weights, zero bias.
void init_linear(ModelParams& params, const std::string& prefix, std::size_t cin, std::size_t cout,
                 std::mt19937_64& rng, double gain = 1.0);

}  // namespace splatloc
