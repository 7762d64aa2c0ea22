// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatloc/geometry.hpp"
#include "splatloc/image.hpp"
#include "splatloc/model.hpp"
#include "splatloc/pose_solver.hpp"
#include "splatloc/scene_io.hpp"

namespace splatloc {

enum class MatcherKind { ncc, model };

MatcherKind parse_matcher(const std::string& name);
std::string to_string(MatcherKind kind);

struct NccOptions {
  int stride = 4;         // render grid spacing, pixels
  int search_radius = 8;  // query search window half-size, pixels
  int patch_radius = 4;   // 9 x 9 patches
  double min_score = 0.7;
  bool mutual = true;
  /// Quadratic peak refinement, averaged over both match directions.
  bool subpixel = true;
};

struct RefinementConfig {
  std::size_t iterations = 3;
  MatcherKind matcher = MatcherKind::ncc;
  std::size_t min_matches = 8;
  double alpha_floor = 0.5;
  NccOptions ncc;
  RansacOptions ransac{2.0, 2000, 0.999, 0};

  /// Throws ConfigError when min_matches < 4.
  void validate() const;
};

struct Match2d {
  Vec2 query;
  Vec2 render;
  double score = 0.0;
};

/// Luminance of an RGB float image (single channel).
ImageF to_gray(const ImageF& image);

/// Zero-mean NCC matches from a stride grid in the render to the query,
/// optionally refined to subpixel.
std::vector<Match2d> dense_match_ncc(const ImageF& query, const ImageF& render,
                                     const NccOptions& options = {});

/// Trained-matcher variant: the rendered image's coarse features stand in
/// for the scene stream (no alignment), fine windows come from the query.
std::vector<Match2d> dense_match_model(const ImageF& query, const ImageF& render,
                                       const ModelParams& params, const ModelConfig& config);

/// Render pixels with alpha >= alpha_floor and positive depth are lifted to
/// 3D at pose0 and paired with their query pixels.
std::vector<Correspondence> lift_matches(const std::vector<Match2d>& matches, const ImageF& depth,
                                         const ImageF& alpha, const Pose& pose0,
                                         const CameraIntrinsics& k, double alpha_floor);

struct RefinementRound {
  std::size_t matches = 0;
  std::size_t lifted = 0;
  std::size_t inliers = 0;
  std::size_t previous_inliers = 0;  // old pose on this round's correspondences
  bool adopted = false;
  std::string skip_reason;  // empty when the round produced a candidate
};

struct RefinementResult {
  Pose pose;
  std::vector<RefinementRound> rounds;
  bool skipped = false;  // every round kept the previous pose
};

/// Needed only for the model matcher.
struct MatcherModel {
  const ModelParams* params = nullptr;
  ModelConfig config;
};

/// Render, match, lift and re-solve `iterations` times, adopting a round's
/// pose only when its inlier count on that round's correspondences is at
/// least the previous pose's and at least 4.
RefinementResult refine(const ImageF& query, const Pose& pose0, const GaussianScene& scene,
                        const CameraIntrinsics& k, const RefinementConfig& config,
                        const MatcherModel& model = {});

struct LocalizeConfig {
  bool coarse_only = false;
  bool refine = true;
  RansacOptions ransac{3.0, 2000, 0.999, 0};
  /// Inlier threshold when coarse patch centers are the image points.
  double coarse_inlier_px = 6.0;
  RefinementConfig refinement;
};

/// Scene side of localization, computed once per scene and model.
struct SceneContext {
  const GaussianScene* scene = nullptr;  // filtered and subsampled
  ScenePlan plan;
  SceneEncoding encoding;
};

SceneContext prepare_context(const GaussianScene& scene, const ModelParams& params,
                             const ModelConfig& config);

struct LocalizeResult {
  std::optional<Pose> pose;          // refined when refinement ran
  std::optional<Pose> initial_pose;  // PnP + RANSAC before refinement
  std::size_t coarse_matches = 0;
  std::size_t fine_matches = 0;
  std::size_t dropped_windows = 0;
  std::size_t inliers = 0;
  double inlier_ratio = 0.0;
  std::string failure;  // empty on success
  std::vector<RefinementRound> rounds;
  nlohmann::json timings_ms = nlohmann::json::object();
  std::vector<FineMatch> matches;  // correspondences fed to PnP

  nlohmann::json diagnostics() const;
};

/// Encode, align, match coarse-to-fine, PnP + RANSAC, then refine. A query
/// without consensus yields a result with no pose and `failure` set.
LocalizeResult localize(const Image8& query, const SceneContext& context, const ModelParams& params,
                        const ModelConfig& model, const CameraIntrinsics& k,
                        const LocalizeConfig& config);

}  // namespace splatloc
