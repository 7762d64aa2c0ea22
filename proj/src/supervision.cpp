// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace splatloc {

std::vector<std::uint8_t> GroundTruth::dense() const {
  std::vector<std::uint8_t> m(patches * points, 0);
  for (const auto& [i, j] : matches) m[i * points + j] = 1;
  return m;
}

GroundTruth gt_matches(const Eigen::MatrixX3d& points, const Pose& pose,
                       const CameraIntrinsics& k) {
  k.validate();
  if (k.width % static_cast<int>(kCoarseStride) != 0 ||
      k.height % static_cast<int>(kCoarseStride) != 0) {
    throw ArgumentError(
        fmt::format("ground truth needs image sides divisible by 8, got {}x{}", k.width, k.height));
  }
  const PatchGrid grid{static_cast<std::size_t>(k.width), static_cast<std::size_t>(k.height)};
  GroundTruth gt;
  gt.patches = grid.size();
  gt.points = static_cast<std::size_t>(points.rows());
  gt.visible_mask.assign(gt.points, false);
  for (std::size_t j = 0; j < gt.points; ++j) {
    const auto proj = project(points.row(static_cast<Eigen::Index>(j)).transpose(), pose, k);
    if (!proj) continue;
    const auto patch = grid.patch_of(proj->pixel);
    if (!patch) continue;
    gt.visible_mask[j] = true;
    gt.fine_targets.emplace(j, proj->pixel);
    gt.matches.emplace_back(*patch, j);
  }
  std::sort(gt.matches.begin(), gt.matches.end());
  return gt;
}

std::optional<Tensor> coarse_loss(const Tensor& scores, const GroundTruth& gt) {
  if (gt.matches.empty()) return std::nullopt;
  if (scores.rank() != 2 || scores.dim(0) != gt.patches || scores.dim(1) != gt.points) {
    throw ShapeError(fmt::format("coarse_loss: scores {} vs ground truth [{},{}]",
                                 shape_to_string(scores.shape()), gt.patches, gt.points));
  }
  return scale(mean(log_clamped(gather_elements(scores, gt.matches), kScoreFloor)), -1.0);
}

std::optional<Tensor> fine_loss(const Tensor& expectation,
                                std::span<const std::size_t> scene_indices,
                                std::span<const double> variance, const GroundTruth& gt) {
  if (scene_indices.size() != variance.size() ||
      (scene_indices.size() > 0 &&
       (expectation.rank() != 2 || expectation.dim(0) != scene_indices.size() ||
        expectation.dim(1) != 2))) {
    throw ShapeError("fine_loss: predictions, indices and variances disagree");
  }
  std::vector<std::size_t> rows;
  std::vector<double> targets, weights;
  for (std::size_t m = 0; m < scene_indices.size(); ++m) {
    const auto it = gt.fine_targets.find(scene_indices[m]);
    if (it == gt.fine_targets.end()) continue;
    rows.push_back(m);
    targets.push_back(it->second.x());
    targets.push_back(it->second.y());
    weights.push_back(1.0 / std::max(variance[m], kVarianceFloor));
  }
  if (rows.empty()) return std::nullopt;
  const std::size_t n = rows.size();
  Tensor diff = sub(gather_rows(expectation, rows), Tensor::from({n, 2}, std::move(targets)));
  return mean(mul(row_norm(diff), Tensor::from({n}, std::move(weights))));
}

std::optional<double> fine_loss(std::span<const FineMatch> predicted, const GroundTruth& gt) {
  std::vector<std::size_t> idx;
  std::vector<double> xy, var;
  for (const auto& f : predicted) {
    idx.push_back(f.scene);
    xy.push_back(f.pixel.x());
    xy.push_back(f.pixel.y());
    var.push_back(f.variance);
  }
  NoGradGuard no_grad;
  const auto loss = fine_loss(Tensor::from({idx.size(), 2}, std::move(xy)), idx, var, gt);
  if (!loss) return std::nullopt;
  return loss->item();
}

std::optional<Tensor> total_loss(const std::optional<Tensor>& coarse,
                                 const std::optional<Tensor>& fine) {
  if (!coarse) return std::nullopt;
  return fine ? add(*coarse, *fine) : *coarse;
}

TrainingScene load_training_scene(const std::filesystem::path& dir) {
  TrainingScene s;
  s.name = dir.filename().string();
  s.scene = load_ply(dir / "scene.ply");
  s.intrinsics = read_intrinsics(dir / "intrinsics.txt");
  s.poses = read_poses(dir / "poses.txt");
  std::vector<std::filesystem::path> files;
  const auto images = dir / "images";
  if (!std::filesystem::is_directory(images)) {
    throw IoError(fmt::format("missing image directory '{}'", images.string()));
  }
  for (const auto& e : std::filesystem::directory_iterator(images)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() != s.poses.size()) {
    throw DataError(
        fmt::format("'{}' has {} images but {} poses", dir.string(), files.size(), s.poses.size()));
  }
  for (const auto& f : files) {
    s.images.push_back(read_image(f));
    if (s.images.back().width != s.intrinsics.width ||
        s.images.back().height != s.intrinsics.height) {
      throw DataError(fmt::format("image '{}' is {}x{} but intrinsics say {}x{}", f.string(),
                                  s.images.back().width, s.images.back().height, s.intrinsics.width,
                                  s.intrinsics.height));
    }
  }
  return s;
}

namespace {

struct PreparedSample {
  std::size_t scene = 0;
  std::size_t image = 0;
  Tensor input;
  GroundTruth gt;
};

}  // namespace

std::vector<StepRecord> train(std::span<const TrainingScene> scenes, ModelParams& params,
                              const TrainConfig& config) {
  if (scenes.empty()) throw ArgumentError("train: no scenes");
  const ModelConfig model = model_config(params);
  const int side = model.enc2d.image_size;

  std::vector<ScenePlan> plans;
  std::vector<PreparedSample> samples;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const TrainingScene& ts = scenes[s];
    if (ts.images.empty())
      throw ArgumentError(fmt::format("train: scene '{}' has no images", ts.name));
    if (ts.images.size() != ts.poses.size()) {
      throw ArgumentError(fmt::format("train: scene '{}' has {} images but {} poses", ts.name,
                                      ts.images.size(), ts.poses.size()));
    }
    plans.push_back(plan_scene(ts.scene, model.enc3d));
    const CameraIntrinsics k = ts.intrinsics.resized(side, side);
    const Eigen::MatrixX3d& q = plans.back().stages.back().pooling.centroids;
    for (std::size_t i = 0; i < ts.images.size(); ++i) {
      samples.push_back(
          {s, i, preprocess(ts.images[i], model.enc2d), gt_matches(q, ts.poses[i], k)});
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::vector<StepRecord> log;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      if (config.max_steps > 0 && step >= config.max_steps) break;
      ++step;
      const PreparedSample& sample = samples[idx];
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.scene = sample.scene;
      rec.image = sample.image;
      rec.gt_matches = sample.gt.matches.size();

      params.zero_grad();
      const CoarseForward fwd = forward_coarse(plans[sample.scene], sample.input, params, model);
      const auto lc = coarse_loss(fwd.scores.scores, sample.gt);
      std::optional<Tensor> lf;
      if (!config.coarse_only && lc) {
        // Teacher forcing: fine windows at the ground-truth patches.
        const FineOutput fine = fine_forward(sample.gt.matches, fwd.image.fine, fwd.image.grid,
                                             fwd.aligned.scene, params, model.match);
        std::vector<std::size_t> scene_idx;
        for (std::size_t m : fine.kept) scene_idx.push_back(sample.gt.matches[m].second);
        rec.fine_pairs = scene_idx.size();
        if (!scene_idx.empty())
          lf = fine_loss(fine.expectation, scene_idx, fine.variance, sample.gt);
      }
      const auto total = total_loss(lc, lf);
      if (!total) {
        rec.skipped = true;
        params.clear_grad();
      } else {
        rec.coarse = lc->item();
        rec.fine = lf ? lf->item() : 0.0;
        rec.total = total->item();
        if (!std::isfinite(rec.total)) {
          throw TrainingError(fmt::format(
              "non-finite loss at step {} (epoch {}, scene {}, image {}): L_c={} L_f={}", step,
              epoch, sample.scene, sample.image, rec.coarse, rec.fine));
        }
        backward(*total);
        params.adam_step(config.adam);
      }
      log.push_back(rec);
      if (config.on_step) config.on_step(rec);
    }
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      params.save(config.checkpoint_dir / fmt::format("epoch_{}.params", epoch));
    }
    if (config.max_steps > 0 && step >= config.max_steps) break;
  }
  return log;
}

void write_loss_log(const std::filesystem::path& path, std::span<const StepRecord> log) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "step,epoch,scene,image,coarse,fine,total,gt_matches,fine_pairs,skipped\n";
  for (const auto& r : log) {
    out << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{},{},{}\n", r.step, r.epoch, r.scene,
                       r.image, r.coarse, r.fine, r.total, r.gt_matches, r.fine_pairs,
                       r.skipped ? 1 : 0);
  }
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace splatloc
