// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatloc/geometry.hpp"
#include "splatloc/image.hpp"
#include "splatloc/matching.hpp"
#include "splatloc/model.hpp"
#include "splatloc/params.hpp"
#include "splatloc/scene_io.hpp"

namespace splatloc {

/// Patch/point associations from a known pose. Each point falls in at most
/// one patch, so every column of the binary matrix has at most one entry.
struct GroundTruth {
  std::size_t patches = 0;  // N_c
  std::size_t points = 0;   // N_g
  /// Nonzero (patch, point) entries, ordered by patch then point.
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  /// point index -> exact projected pixel, for visible points only.
  std::map<std::size_t, Vec2> fine_targets;
  std::vector<bool> visible_mask;

  /// Row-major N_c x N_g 0/1 matrix.
  std::vector<std::uint8_t> dense() const;
};

/// Projects every point; points behind the camera or outside the image
/// [-0.5, W - 0.5) x [-0.5, H - 0.5) are invisible. Visible points map to the
/// patch containing their projection. Image sides must be multiples of 8.
GroundTruth gt_matches(const Eigen::MatrixX3d& points, const Pose& pose, const CameraIntrinsics& k);

inline constexpr double kScoreFloor = 1e-12;
inline constexpr double kVarianceFloor = 1e-6;

/// Mean of -log(max(S, 1e-12)) over ground-truth entries; nullopt (skip the
/// sample) when there are none.
std::optional<Tensor> coarse_loss(const Tensor& scores, const GroundTruth& gt);

/// Mean of |x_pred - x_gt| / max(var, 1e-6) over predictions whose scene
/// index has a fine target. The weight carries no gradient. `expectation`
/// is [M, 2]; nullopt when nothing pairs.
std::optional<Tensor> fine_loss(const Tensor& expectation,
                                std::span<const std::size_t> scene_indices,
                                std::span<const double> variance, const GroundTruth& gt);
/// Value-only form over inference matches.
std::optional<double> fine_loss(std::span<const FineMatch> predicted, const GroundTruth& gt);

/// L_c + L_f. A skipped coarse term skips the sample; a skipped fine term
/// contributes nothing.
std::optional<Tensor> total_loss(const std::optional<Tensor>& coarse,
                                 const std::optional<Tensor>& fine);

/// One scene with posed training images. The scene should already be
/// filtered and subsampled.
struct TrainingScene {
  std::string name;
  GaussianScene scene;
  std::vector<Image8> images;
  std::vector<Pose> poses;
  CameraIntrinsics intrinsics;  // of the stored images
};

/// Reads `scene.ply`, `intrinsics.txt`, `poses.txt` and `images/` (sorted
/// file names, one per pose) from `dir`.
TrainingScene load_training_scene(const std::filesystem::path& dir);

struct StepRecord {
  std::size_t step = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  std::size_t scene = 0;
  std::size_t image = 0;
  double coarse = 0.0;
  double fine = 0.0;
  double total = 0.0;
  std::size_t gt_matches = 0;
  std::size_t fine_pairs = 0;
  bool skipped = false;
};

struct TrainConfig {
  std::size_t epochs = 100;
  /// Stops after this many steps when nonzero.
  std::size_t max_steps = 0;
  AdamOptions adam;
  std::uint64_t seed = 0;
  /// Disables the fine stage and its loss.
  bool coarse_only = false;
  /// Writes checkpoint_dir/epoch_{e}.params every this many epochs when nonzero.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::function<void(const StepRecord&)> on_step;
};

/// Epoch-shuffled single-sample Adam training on every (scene, image) pair.
/// Throws TrainingError on a non-finite loss.
std::vector<StepRecord> train(std::span<const TrainingScene> scenes, ModelParams& params,
                              const TrainConfig& config);

/// CSV: step,epoch,scene,image,coarse,fine,total,gt_matches,fine_pairs,skipped.
void write_loss_log(const std::filesystem::path& path, std::span<const StepRecord> log);

}  // namespace splatloc
