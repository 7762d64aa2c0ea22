// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/refinement.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "splatloc/layers.hpp"
#include "splatloc/renderer.hpp"

namespace splatloc {

MatcherKind parse_matcher(const std::string& name) {
  if (name == "ncc") return MatcherKind::ncc;
  if (name == "model") return MatcherKind::model;
  throw ConfigError(fmt::format("unknown matcher '{}' (expected ncc or model)", name));
}

std::string to_string(MatcherKind kind) { return kind == MatcherKind::ncc ? "ncc" : "model"; }

void RefinementConfig::validate() const {
  if (min_matches < kMinimalSample) {
    throw ConfigError(
        fmt::format("refinement min_matches must be at least 4, got {}", min_matches));
  }
  if (ncc.stride <= 0 || ncc.search_radius < 0 || ncc.patch_radius < 0) {
    throw ConfigError("ncc stride must be positive and radii non-negative");
  }
}

ImageF to_gray(const ImageF& image) {
  if (image.channels == 1) return image;
  ImageF g(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      g.at(x, y) =
          0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
    }
  }
  return g;
}

namespace {

// Zero-mean, unit-norm patches for every center where the patch fits; empty
// vectors mark flat patches, for which NCC is undefined.
class PatchBank {
 public:
  PatchBank(const ImageF& gray, int radius)
      : width_(gray.width), height_(gray.height), radius_(radius) {
    const int side = 2 * radius + 1;
    patches_.resize(static_cast<std::size_t>(width_) * height_);
    for (int y = radius; y + radius < height_; ++y) {
      for (int x = radius; x + radius < width_; ++x) {
        std::vector<double> p;
        p.reserve(static_cast<std::size_t>(side * side));
        for (int dy = -radius; dy <= radius; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) p.push_back(gray.at(x + dx, y + dy));
        }
        double mean = 0.0;
        for (double v : p) mean += v;
        mean /= static_cast<double>(p.size());
        double norm = 0.0;
        for (double& v : p) {
          v -= mean;
          norm += v * v;
        }
        if (norm < 1e-10) continue;
        norm = std::sqrt(norm);
        for (double& v : p) v /= norm;
        patches_[index(x, y)] = std::move(p);
      }
    }
  }

  bool valid(int x, int y) const {
    return x >= radius_ && y >= radius_ && x + radius_ < width_ && y + radius_ < height_ &&
           !patches_[index(x, y)].empty();
  }

  const std::vector<double>& at(int x, int y) const { return patches_[index(x, y)]; }

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  int width_, height_, radius_;
  std::vector<std::vector<double>> patches_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Peak {
  int x = 0, y = 0;
  double score = -2.0;
};

// Best NCC of `patch` against `bank` centers within `radius` of (cx, cy).
Peak search(const std::vector<double>& patch, const PatchBank& bank, int cx, int cy, int radius) {
  Peak best;
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      if (!bank.valid(x, y)) continue;
      const double s = dot(patch, bank.at(x, y));
      if (s > best.score) best = {x, y, s};
    }
  }
  return best;
}

// Vertex of the quadratic through the 3 x 3 scores of `patch` against bank
// centers around (cx, cy), cross term included. nullopt when a neighbor is
// missing or the fit has no maximum.
std::optional<Vec2> quadratic_peak(const std::vector<double>& patch, const PatchBank& bank, int cx,
                                   int cy) {
  double f[3][3];
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!bank.valid(cx + dx, cy + dy)) return std::nullopt;
      f[dy + 1][dx + 1] = dot(patch, bank.at(cx + dx, cy + dy));
    }
  }
  const Vec2 grad(0.5 * (f[1][2] - f[1][0]), 0.5 * (f[2][1] - f[0][1]));
  Eigen::Matrix2d hess;
  hess(0, 0) = f[1][2] - 2.0 * f[1][1] + f[1][0];
  hess(1, 1) = f[2][1] - 2.0 * f[1][1] + f[0][1];
  hess(0, 1) = hess(1, 0) = 0.25 * (f[2][2] - f[0][2] - f[2][0] + f[0][0]);
  if (!(hess(0, 0) < 0.0) || !(hess.determinant() > 0.0)) return std::nullopt;
  const Vec2 offset = -hess.inverse() * grad;
  if (!(offset.cwiseAbs().maxCoeff() <= 1.0)) return std::nullopt;
  return offset;
}

// Half the difference of the forward (render patch in query) and backward
// (query patch in render) peak offsets. Texture asymmetry biases both the
// same way, so it cancels; identical patches give exactly zero.
Vec2 symmetric_offset(const std::vector<double>& rp, const PatchBank& qbank, int qx, int qy,
                      const std::vector<double>& qp, const PatchBank& rbank, int rx, int ry) {
  const auto forward = quadratic_peak(rp, qbank, qx, qy);
  const auto backward = quadratic_peak(qp, rbank, rx, ry);
  if (!forward || !backward) return Vec2::Zero();
  return 0.5 * (*forward - *backward);
}

double native_coord(double resized, int native, int resized_side) {
  return (resized + 0.5) * static_cast<double>(native) / resized_side - 0.5;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

std::vector<Match2d> dense_match_ncc(const ImageF& query, const ImageF& render,
                                     const NccOptions& options) {
  if (query.width != render.width || query.height != render.height) {
    throw ArgumentError(fmt::format("dense matching needs equal sizes, got {}x{} and {}x{}",
                                    query.width, query.height, render.width, render.height));
  }
  const PatchBank qbank(to_gray(query), options.patch_radius);
  const PatchBank rbank(to_gray(render), options.patch_radius);
  std::vector<Match2d> out;
  for (int y = options.stride; y < render.height; y += options.stride) {
    for (int x = options.stride; x < render.width; x += options.stride) {
      if (!rbank.valid(x, y)) continue;
      const auto& rp = rbank.at(x, y);
      const Peak p = search(rp, qbank, x, y, options.search_radius);
      if (p.score < options.min_score) continue;
      if (options.mutual) {
        const Peak back = search(qbank.at(p.x, p.y), rbank, p.x, p.y, options.search_radius);
        if (back.x != x || back.y != y) continue;
      }
      Vec2 q(p.x, p.y);
      if (options.subpixel) {
        const auto& qp = qbank.at(p.x, p.y);
        q += symmetric_offset(rp, qbank, p.x, p.y, qp, rbank, x, y);
      }
      out.push_back({q, Vec2(x, y), p.score});
    }
  }
  return out;
}

std::vector<Match2d> dense_match_model(const ImageF& query, const ImageF& render,
                                       const ModelParams& params, const ModelConfig& config) {
  if (query.width != render.width || query.height != render.height) {
    throw ArgumentError("dense matching needs equal image sizes");
  }
  NoGradGuard no_grad;
  const ImageEncoding q = encode_image(preprocess(query, config.enc2d), params, config.enc2d);
  const ImageEncoding r = encode_image(preprocess(render, config.enc2d), params, config.enc2d);
  const ScoreMatrix s =
      score_matrix(linear(q.coarse, params, "match.proj2d"),
                   linear(r.coarse, params, "match.proj3d"), config.match.temperature);
  const auto pairs =
      mutual_matches(s.scores.data(), s.scores.dim(0), s.scores.dim(1), config.match.theta_c);
  const FineOutput fine = fine_forward(pairs, q.fine, q.grid, r.coarse, params, config.match);
  const int side = config.enc2d.image_size;
  std::vector<Match2d> out;
  for (std::size_t k = 0; k < fine.kept.size(); ++k) {
    const auto [qi, rj] = pairs[fine.kept[k]];
    const Vec2 rc = r.grid.patch_center(rj);
    Match2d m;
    m.query = {native_coord(fine.expectation.at(k, 0), query.width, side),
               native_coord(fine.expectation.at(k, 1), query.height, side)};
    m.render = {native_coord(rc.x(), render.width, side),
                native_coord(rc.y(), render.height, side)};
    m.score = s.scores.at(qi, rj);
    out.push_back(m);
  }
  return out;
}

std::vector<Correspondence> lift_matches(const std::vector<Match2d>& matches, const ImageF& depth,
                                         const ImageF& alpha, const Pose& pose0,
                                         const CameraIntrinsics& k, double alpha_floor) {
  std::vector<Correspondence> out;
  for (const auto& m : matches) {
    const double a = sample_bilinear(alpha, m.render.x(), m.render.y(), 0);
    const double d = sample_bilinear(depth, m.render.x(), m.render.y(), 0);
    if (a < alpha_floor || !(d > 0.0)) continue;
    out.push_back({backproject(m.render, d, pose0, k), m.query});
  }
  return out;
}

RefinementResult refine(const ImageF& query, const Pose& pose0, const GaussianScene& scene,
                        const CameraIntrinsics& k, const RefinementConfig& config,
                        const MatcherModel& model) {
  config.validate();
  if (config.matcher == MatcherKind::model && model.params == nullptr) {
    throw ConfigError("the model matcher needs trained parameters");
  }
  RefinementResult result;
  result.pose = pose0;
  result.skipped = true;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    RefinementRound round;
    const RenderOutput view = render_tile_parallel(scene, result.pose, k);
    const auto matches = config.matcher == MatcherKind::ncc
                             ? dense_match_ncc(query, view.color, config.ncc)
                             : dense_match_model(query, view.color, *model.params, model.config);
    const auto corrs =
        lift_matches(matches, view.depth, view.alpha, result.pose, k, config.alpha_floor);
    round.matches = matches.size();
    round.lifted = corrs.size();
    if (corrs.size() < config.min_matches) {
      round.skip_reason = "too few matches";
      result.rounds.push_back(round);
      continue;
    }
    RansacOptions ransac = config.ransac;
    ransac.seed = config.ransac.seed + it;
    SolveResult solved;
    try {
      solved = ransac_pnp(corrs, k, ransac);
    } catch (const NoConsensusError&) {
      round.skip_reason = "no consensus";
      result.rounds.push_back(round);
      continue;
    } catch (const DegenerateConfigError&) {
      round.skip_reason = "degenerate correspondences";
      result.rounds.push_back(round);
      continue;
    }
    round.inliers = solved.inlier_count;
    for (const auto& c : corrs) {
      if (reprojection_error(c, result.pose, k) < ransac.inlier_px) ++round.previous_inliers;
    }
    if (solved.inlier_count < kMinimalSample) {
      round.skip_reason = "fewer than 4 inliers";
    } else if (solved.inlier_count < round.previous_inliers) {
      round.skip_reason = "fewer inliers than the current pose";
    } else {
      round.adopted = true;
      result.pose = solved.pose;
      result.skipped = false;
    }
    result.rounds.push_back(round);
  }
  return result;
}

SceneContext prepare_context(const GaussianScene& scene, const ModelParams& params,
                             const ModelConfig& config) {
  SceneContext c;
  c.scene = &scene;
  c.plan = plan_scene(scene, config.enc3d);
  NoGradGuard no_grad;
  c.encoding = encode_scene(c.plan, params, config.enc3d);
  return c;
}

nlohmann::json LocalizeResult::diagnostics() const {
  nlohmann::json j;
  j["success"] = pose.has_value();
  j["failure"] = failure;
  j["coarse_matches"] = coarse_matches;
  j["fine_matches"] = fine_matches;
  j["dropped_windows"] = dropped_windows;
  j["inliers"] = inliers;
  j["inlier_ratio"] = inlier_ratio;
  j["timings_ms"] = timings_ms;
  auto& rs = j["refinement"] = nlohmann::json::array();
  for (const auto& r : rounds) {
    rs.push_back({{"matches", r.matches},
                  {"lifted", r.lifted},
                  {"inliers", r.inliers},
                  {"previous_inliers", r.previous_inliers},
                  {"adopted", r.adopted},
                  {"skip_reason", r.skip_reason}});
  }
  return j;
}

LocalizeResult localize(const Image8& query, const SceneContext& context, const ModelParams& params,
                        const ModelConfig& model, const CameraIntrinsics& k,
                        const LocalizeConfig& config) {
  if (context.scene == nullptr) throw ArgumentError("localize: scene context is not prepared");
  if (query.width != k.width || query.height != k.height) {
    throw DataError(fmt::format("query is {}x{} but intrinsics say {}x{}", query.width,
                                query.height, k.width, k.height));
  }
  LocalizeResult result;
  auto t0 = std::chrono::steady_clock::now();
  const int side = model.enc2d.image_size;
  const CameraIntrinsics ks = k.resized(side, side);
  std::vector<Correspondence> corrs;
  double inlier_px = config.ransac.inlier_px;
  {
    NoGradGuard no_grad;
    const ImageEncoding enc = encode_image(preprocess(query, model.enc2d), params, model.enc2d);
    result.timings_ms["encode_image"] = elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    const AlignedFeatures aligned = align(context.encoding.features, context.encoding.points,
                                          enc.coarse, enc.grid, params, model.align);
    result.timings_ms["align"] = elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    const ScoreMatrix scores = coarse_scores(aligned, params, model.match);
    const auto coarse =
        coarse_match(scores, enc.grid, context.encoding.points, model.match.theta_c);
    result.coarse_matches = coarse.size();
    if (config.coarse_only) {
      inlier_px = config.coarse_inlier_px;
      for (const auto& c : coarse) {
        result.matches.push_back(
            {c.scene, c.patch, c.scene_point, c.patch_center, 0.0, c.score, {}});
      }
    } else {
      result.matches = fine_match(coarse, enc.fine, enc.grid, aligned.scene, params, model.match,
                                  &result.dropped_windows);
    }
    result.fine_matches = config.coarse_only ? 0 : result.matches.size();
    corrs = matches_to_correspondences(result.matches);
    result.timings_ms["match"] = elapsed_ms(t0);
  }
  if (corrs.size() < kMinimalSample) {
    result.failure = fmt::format("only {} correspondences", corrs.size());
    return result;
  }
  t0 = std::chrono::steady_clock::now();
  RansacOptions ransac = config.ransac;
  ransac.inlier_px = inlier_px;
  try {
    const SolveResult solved = ransac_pnp(corrs, ks, ransac);
    result.initial_pose = solved.pose;
    result.inliers = solved.inlier_count;
    result.inlier_ratio =
        static_cast<double>(solved.inlier_count) / static_cast<double>(corrs.size());
  } catch (const NoConsensusError& e) {
    result.failure = fmt::format("no consensus: {}", e.what());
  } catch (const DegenerateConfigError& e) {
    result.failure = fmt::format("degenerate correspondences: {}", e.what());
  }
  result.timings_ms["pnp"] = elapsed_ms(t0);
  if (!result.initial_pose) return result;
  result.pose = result.initial_pose;
  if (config.refine) {
    t0 = std::chrono::steady_clock::now();
    const RefinementResult refined = refine(to_float(query), *result.initial_pose, *context.scene,
                                            k, config.refinement, MatcherModel{&params, model});
    result.pose = refined.pose;
    result.rounds = refined.rounds;
    result.timings_ms["refine"] = elapsed_ms(t0);
  }
  return result;
}

}  // namespace splatloc
