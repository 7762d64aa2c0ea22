// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "splatloc/common.hpp"

namespace splatloc {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.declare("seed", "0",
            "seed for scene synthesis, subsampling, initialization, shuffling, RANSAC");
  c.declare("threads", "0", "worker thread cap (0 = hardware concurrency)");
  c.declare("dims", "toy", "model dimensions: toy or full");
  c.declare("theta_c", "auto", "coarse match score threshold (auto = the model's value)");
  c.declare("opacity_threshold", "0.9", "minimum activated opacity kept from a scene");
  c.declare("max_gaussians", "100000", "uniform subsample size after filtering");
  c.declare("ransac_iters", "2000", "maximum RANSAC iterations for the initial solve");
  c.declare("inlier_px", "3", "RANSAC inlier threshold for fine matches, pixels");
  c.declare("coarse_inlier_px", "6", "RANSAC inlier threshold in coarse-only mode, pixels");
  c.declare("coarse_only", "false", "skip the fine stage (multi-scene regime)");
  c.declare("refine", "true", "run render-match-lift refinement after the initial solve");
  c.declare("refine_iters", "3", "refinement iterations");
  c.declare("matcher", "ncc", "refinement matcher: ncc or model");
  c.declare("refine_inlier_px", "2", "RANSAC inlier threshold during refinement, pixels");
  c.declare("min_matches", "8", "minimum lifted matches for a refinement round");
  c.declare("alpha_floor", "0.5", "minimum rendered alpha for lifting a match");
  c.declare("t_thresh", "0.05", "recall translation threshold, scene units");
  c.declare("r_thresh_deg", "5", "recall rotation threshold, degrees");
  c.declare("lr", "1e-4", "Adam learning rate");
  c.declare("epochs", "100", "training epochs");
  c.declare("max_steps", "2000", "training step cap (0 = no cap)");
  c.declare("checkpoint_every", "0", "write a checkpoint every N epochs (0 = never)");
  c.declare("overlays", "true", "write per-query match overlays during eval");
  c.declare("bench.n_gaussians", "200", "synthetic scene size");
  c.declare("bench.extent", "1", "side of the cube holding the synthetic scene");
  c.declare("bench.scale_min", "0.04", "smallest Gaussian sigma, fraction of the extent");
  c.declare("bench.scale_max", "0.10", "largest Gaussian sigma, fraction of the extent");
  c.declare("bench.opacity_min", "0.92", "smallest synthetic opacity");
  c.declare("bench.opacity_max", "0.99", "largest synthetic opacity");
  c.declare("bench.sh_rest_amplitude", "0", "amplitude of higher-order SH coefficients");
  c.declare("bench.n_train_views", "50", "training views");
  c.declare("bench.n_test_views", "10", "held-out views");
  c.declare("bench.image_size", "64", "square image side, pixels");
  c.declare("bench.fov_deg", "60", "horizontal field of view, degrees");
  c.declare("bench.orbit_radius", "1.6", "camera distance, multiple of the extent");
  c.declare("bench.orbit_jitter", "0.1", "relative camera distance jitter");
  c.declare("bench.min_elevation_deg", "-20", "lowest camera elevation, degrees");
  c.declare("bench.max_elevation_deg", "50", "highest camera elevation, degrees");
  c.declare("bench.min_coverage", "0.3", "minimum alpha coverage per view");
  return c;
}

void RunConfig::declare(const std::string& key, const std::string& value, const std::string& help) {
  entries_[key] = Entry{value, help, false};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  it->second.value = value;
  it->second.overridden = true;
}

void RunConfig::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("expected key = value, got '{}'", assignment));
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError(fmt::format("missing key in '{}'", assignment));
  set(key, trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read config '{}'", path.string()));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    try {
      assign(body);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", path.string(), number, e.what()));
    }
  }
}

bool RunConfig::overridden(const std::string& key) const { return entry(key).overridden; }

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

const std::string& RunConfig::text(const std::string& key) const { return entry(key).value; }

double RunConfig::number(const std::string& key) const {
  const std::string& v = text(key);
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(fmt::format("config key '{}' expects a number, got '{}'", key, v));
  }
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  const std::string& v = text(key);
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw ConfigError(
        fmt::format("config key '{}' expects a non-negative integer, got '{}'", key, v));
  }
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = text(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("config key '{}' expects true or false, got '{}'", key, v));
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [key, e] : entries_) out += fmt::format("{} = {}\n", key, e.value);
  return out;
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.resolved");
  out << resolved();
  if (!out) throw IoError(fmt::format("cannot write '{}'", (dir / "config.resolved").string()));
}

std::vector<std::string> RunConfig::help() const {
  std::vector<std::string> lines;
  for (const auto& [key, e] : entries_) {
    lines.push_back(fmt::format("{:<24} {:<8} {}", key, e.value, e.help));
  }
  return lines;
}

}  // namespace splatloc
