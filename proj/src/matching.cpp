// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/matching.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "splatloc/layers.hpp"

namespace splatloc {

ScoreMatrix score_matrix(const Tensor& image_shared, const Tensor& scene_shared,
                         double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("matching temperature must be positive");
  ScoreMatrix s;
  s.raw = matmul(normalize_rows(image_shared), transpose(normalize_rows(scene_shared)));
  Tensor logits = scale(s.raw, 1.0 / temperature);
  s.row_soft = softmax(logits, 1);
  s.col_soft = softmax(logits, 0);
  s.scores = mul(s.row_soft, s.col_soft);
  return s;
}

ScoreMatrix coarse_scores(const AlignedFeatures& aligned, const ModelParams& params,
                          const MatchingConfig& config) {
  return score_matrix(linear(aligned.image, params, "match.proj2d"),
                      linear(aligned.scene, params, "match.proj3d"), config.temperature);
}

std::vector<std::pair<std::size_t, std::size_t>> mutual_matches(std::span<const double> scores,
                                                                std::size_t rows, std::size_t cols,
                                                                double theta) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (rows == 0 || cols == 0) return out;
  // First maximum wins ties, for both rows and columns.
  std::vector<std::size_t> row_best(rows, 0), col_best(cols, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 1; j < cols; ++j) {
      if (scores[i * cols + j] > scores[i * cols + row_best[i]]) row_best[i] = j;
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 1; i < rows; ++i) {
      if (scores[i * cols + j] > scores[col_best[j] * cols + j]) col_best[j] = i;
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = row_best[i];
    if (col_best[j] == i && scores[i * cols + j] >= theta) out.emplace_back(i, j);
  }
  return out;
}

std::vector<CoarseMatch> coarse_match(const ScoreMatrix& s, const PatchGrid& grid,
                                      const Eigen::MatrixX3d& scene_points, double theta_c) {
  const std::size_t rows = s.scores.dim(0), cols = s.scores.dim(1);
  std::vector<CoarseMatch> out;
  for (const auto& [i, j] : mutual_matches(s.scores.data(), rows, cols, theta_c)) {
    CoarseMatch m;
    m.patch = i;
    m.scene = j;
    m.score = s.scores.data()[i * cols + j];
    m.patch_center = grid.patch_center(i);
    m.scene_point = scene_points.row(static_cast<Eigen::Index>(j)).transpose();
    out.push_back(m);
  }
  return out;
}

std::optional<std::vector<std::size_t>> window_rows(const PatchGrid& grid, std::size_t patch,
                                                    std::size_t window) {
  const auto [ac, ar] = grid.fine_anchor(patch);
  const std::size_t half = window / 2;
  if (ac < half || ar < half || ac + half >= grid.fine_cols() || ar + half >= grid.fine_rows()) {
    return std::nullopt;
  }
  std::vector<std::size_t> rows;
  rows.reserve(window * window);
  for (std::size_t r = ar - half; r <= ar + half; ++r) {
    for (std::size_t c = ac - half; c <= ac + half; ++c) rows.push_back(r * grid.fine_cols() + c);
  }
  return rows;
}

Eigen::MatrixX2d window_offsets(std::size_t window) {
  Eigen::MatrixX2d o(static_cast<Eigen::Index>(window * window), 2);
  const double half = static_cast<double>(window / 2);
  for (std::size_t r = 0; r < window; ++r) {
    for (std::size_t c = 0; c < window; ++c) {
      const auto idx = static_cast<Eigen::Index>(r * window + c);
      o(idx, 0) = kFineStride * (static_cast<double>(c) - half);
      o(idx, 1) = kFineStride * (static_cast<double>(r) - half);
    }
  }
  return o;
}

std::pair<Vec2, double> heatmap_moments(std::span<const double> heatmap, const Vec2& center,
                                        std::size_t window) {
  const Eigen::MatrixX2d offsets = window_offsets(window);
  Vec2 mean = Vec2::Zero();
  for (std::size_t k = 0; k < heatmap.size(); ++k) {
    mean += heatmap[k] * offsets.row(static_cast<Eigen::Index>(k)).transpose();
  }
  double var = 0.0;
  for (std::size_t k = 0; k < heatmap.size(); ++k) {
    var +=
        heatmap[k] * (offsets.row(static_cast<Eigen::Index>(k)).transpose() - mean).squaredNorm();
  }
  return {center + mean, var};
}

FineOutput fine_forward(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                        const Tensor& fine_features, const PatchGrid& grid,
                        const Tensor& scene_features, const ModelParams& params,
                        const MatchingConfig& config) {
  const std::size_t w2 = config.window * config.window;
  if (config.window % 2 == 0) throw ConfigError("fine window size must be odd");
  FineOutput out;
  std::vector<std::size_t> token_rows, scene_rows;
  std::vector<double> centers;
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    auto rows = window_rows(grid, pairs[m].first, config.window);
    if (!rows) {
      ++out.dropped;
      continue;
    }
    out.kept.push_back(m);
    token_rows.insert(token_rows.end(), rows->begin(), rows->end());
    scene_rows.push_back(pairs[m].second);
    const auto [ac, ar] = grid.fine_anchor(pairs[m].first);
    const Vec2 c = grid.fine_center(ac, ar);
    centers.push_back(c.x());
    centers.push_back(c.y());
  }
  const std::size_t m = out.kept.size();
  if (m == 0) return out;
  const std::size_t cf = fine_features.dim(1);
  Tensor tokens = reshape(gather_rows(fine_features, token_rows), {m, w2, cf});
  tokens = batched_self_attention(tokens, params, "fine.window_attn").output;
  Tensor scene = linear(gather_rows(scene_features, scene_rows), params, "fine.scene_proj");
  Tensor logits = reshape(bmm(tokens, reshape(scene, {m, 1, cf}), true), {m, w2});
  out.heatmap = softmax(scale(logits, 1.0 / std::sqrt(static_cast<double>(cf))), 1);

  const Eigen::MatrixX2d offsets = window_offsets(config.window);
  std::vector<double> off(w2 * 2);
  for (std::size_t k = 0; k < w2; ++k) {
    off[2 * k] = offsets(static_cast<Eigen::Index>(k), 0);
    off[2 * k + 1] = offsets(static_cast<Eigen::Index>(k), 1);
  }
  out.expectation = add(matmul(out.heatmap, Tensor::from({w2, 2}, std::move(off))),
                        Tensor::from({m, 2}, std::move(centers)));
  out.variance.resize(m);
  const auto h = out.heatmap.data();
  for (std::size_t i = 0; i < m; ++i) {
    out.variance[i] = heatmap_moments(h.subspan(i * w2, w2), Vec2::Zero(), config.window).second;
  }
  return out;
}

std::vector<FineMatch> fine_match(std::span<const CoarseMatch> coarse, const Tensor& fine_features,
                                  const PatchGrid& grid, const Tensor& scene_features,
                                  const ModelParams& params, const MatchingConfig& config,
                                  std::size_t* dropped) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(coarse.size());
  for (const auto& c : coarse) pairs.emplace_back(c.patch, c.scene);
  const FineOutput f = fine_forward(pairs, fine_features, grid, scene_features, params, config);
  if (dropped) *dropped = f.dropped;
  const std::size_t w2 = config.window * config.window;
  std::vector<FineMatch> out;
  out.reserve(f.kept.size());
  for (std::size_t k = 0; k < f.kept.size(); ++k) {
    const CoarseMatch& c = coarse[f.kept[k]];
    FineMatch fm;
    fm.scene = c.scene;
    fm.patch = c.patch;
    fm.scene_point = c.scene_point;
    fm.pixel = {f.expectation.data()[2 * k], f.expectation.data()[2 * k + 1]};
    fm.variance = f.variance[k];
    fm.score = c.score;
    const auto h = f.heatmap.data().subspan(k * w2, w2);
    fm.heatmap.assign(h.begin(), h.end());
    out.push_back(std::move(fm));
  }
  return out;
}

std::vector<Correspondence> matches_to_correspondences(std::span<const FineMatch> fine) {
  std::vector<Correspondence> out;
  out.reserve(fine.size());
  for (const auto& f : fine) out.push_back({f.scene_point, f.pixel});
  return out;
}

void write_matches_csv(const std::filesystem::path& path, std::span<const FineMatch> fine) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "j,X,Y,Z,u,v,score,var\n";
  for (const auto& f : fine) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", f.scene,
                       f.scene_point.x(), f.scene_point.y(), f.scene_point.z(), f.pixel.x(),
                       f.pixel.y(), f.score, f.variance);
  }
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

void init_matching(ModelParams& params, std::size_t coarse_dim, std::size_t fine_dim,
                   std::size_t ff_mult, std::mt19937_64& rng) {
  init_linear(params, "match.proj2d", coarse_dim, coarse_dim, rng);
  init_linear(params, "match.proj3d", coarse_dim, coarse_dim, rng);
  init_linear(params, "fine.scene_proj", coarse_dim, fine_dim, rng);
  init_attention_block(params, "fine.window_attn", fine_dim, ff_mult, rng);
}

}  // namespace splatloc
