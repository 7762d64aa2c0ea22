// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatloc/tensor.hpp"

namespace splatloc {

struct AdamOptions {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Named learnable weights plus Adam state.
class ModelParams {
 public:
  /// Registers a new weight; names must be unique.
  Tensor& add(const std::string& name, Tensor value);
  /// Normal(0, stddev) initialization drawn from `rng`.
  Tensor& add_normal(const std::string& name, Shape shape, Scalar stddev, std::mt19937_64& rng);
  Tensor& add_constant(const std::string& name, Shape shape, Scalar value);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return weights_.size(); }
  std::size_t parameter_count() const;
  const std::map<std::string, Tensor>& weights() const { return weights_; }

  void zero_grad();
  void clear_grad();
  bool all_finite() const;

  /// One Adam update with bias correction, then clears every gradient.
  /// Throws StateError if any weight lacks a gradient buffer.
  void adam_step(const AdamOptions& options);
  std::int64_t step_count() const { return step_; }
  /// Adam first/second moments for `name`; empty before the first step.
  std::span<const Scalar> first_moment(const std::string& name) const;
  std::span<const Scalar> second_moment(const std::string& name) const;

  /// Free-form metadata stored alongside the weights (model config etc.).
  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  /// Deep copy of weights, moments and metadata.
  ModelParams clone() const;

  void save(const std::filesystem::path& path) const;
  static ModelParams load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> weights_;
  std::map<std::string, std::vector<Scalar>> first_moment_;
  std::map<std::string, std::vector<Scalar>> second_moment_;
  std::int64_t step_ = 0;
  nlohmann::json metadata_ = nlohmann::json::object();
};

}  // namespace splatloc
