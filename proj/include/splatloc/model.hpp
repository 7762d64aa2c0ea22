// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "splatloc/alignment.hpp"
#include "splatloc/encoder2d.hpp"
#include "splatloc/encoder3d.hpp"
#include "splatloc/matching.hpp"
#include "splatloc/params.hpp"

namespace splatloc {

/// Architecture of the whole matcher. The scene encoder output width, the
/// image coarse width and the alignment width are one shared dimension.
struct ModelConfig {
  Encoder3dConfig enc3d;
  Encoder2dConfig enc2d;
  AlignmentConfig align;
  MatchingConfig match;

  /// Desk-scale dims: scene {16,32,64}, coarse 64, fine 32, 64x64 images,
  /// two alignment layers, coarse threshold 0.1.
  static ModelConfig toy();
  /// Full dims: scene {128,256,512}, coarse 512, fine 128, 480x480 images.
  static ModelConfig full();

  std::size_t coarse_dim() const { return enc2d.coarse_dim; }
  std::size_t fine_dim() const { return enc2d.fine_dim; }
  /// Throws ConfigError when the stream widths disagree.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Fresh weights for every module, with the config stored in the metadata.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Config recorded by init_model; ConfigError if absent.
ModelConfig model_config(const ModelParams& params);

/// Image-side and coarse-matching outputs of one forward pass.
struct CoarseForward {
  SceneEncoding scene;
  ImageEncoding image;
  AlignedFeatures aligned;
  ScoreMatrix scores;
};

/// encode scene (from a cached plan) and image, align, score.
CoarseForward forward_coarse(const ScenePlan& plan, const Tensor& image, const ModelParams& params,
                             const ModelConfig& config);

}  // namespace splatloc
