// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace splatloc {
namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t size = 0;
  std::size_t offset = 0;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  std::size_t stride = 0;
};

std::size_t type_size(const std::string& t) {
  static const std::unordered_map<std::string, std::size_t> sizes = {
      {"char", 1},  {"uchar", 1},   {"int8", 1},   {"uint8", 1},  {"short", 2}, {"ushort", 2},
      {"int16", 2}, {"uint16", 2},  {"int", 4},    {"uint", 4},   {"int32", 4}, {"uint32", 4},
      {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
  auto it = sizes.find(t);
  return it == sizes.end() ? 0 : it->second;
}

bool is_float32(const std::string& t) { return t == "float" || t == "float32"; }

std::vector<std::string> required_properties() {
  std::vector<std::string> names = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) names.push_back(fmt::format("f_dc_{}", i));
  for (int i = 0; i < 45; ++i) names.push_back(fmt::format("f_rest_{}", i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back(fmt::format("scale_{}", i));
  for (int i = 0; i < 4; ++i) names.push_back(fmt::format("rot_{}", i));
  return names;
}

std::vector<std::string> vanilla_layout() {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz"};
  for (int i = 0; i < 3; ++i) names.push_back(fmt::format("f_dc_{}", i));
  for (int i = 0; i < 45; ++i) names.push_back(fmt::format("f_rest_{}", i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back(fmt::format("scale_{}", i));
  for (int i = 0; i < 4; ++i) names.push_back(fmt::format("rot_{}", i));
  return names;
}

BoundingBox compute_bbox(const std::vector<Gaussian>& gaussians) {
  BoundingBox box;
  if (gaussians.empty()) return box;
  box.min = box.max = gaussians.front().position;
  for (const auto& g : gaussians) {
    box.min = box.min.cwiseMin(g.position);
    box.max = box.max.cwiseMax(g.position);
  }
  return box;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

double Gaussian::opacity() const { return sigmoid(opacity_logit); }

Eigen::Quaterniond Gaussian::normalized_rotation() const {
  return Eigen::Quaterniond(rotation[0], rotation[1], rotation[2], rotation[3]).normalized();
}

bool BoundingBox::contains(const Vec3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

GaussianScene::GaussianScene(std::vector<Gaussian> gaussians, std::string source_path)
    : gaussians_(std::move(gaussians)),
      source_path_(std::move(source_path)),
      bbox_(compute_bbox(gaussians_)) {}

Eigen::MatrixX3d GaussianScene::positions() const {
  Eigen::MatrixX3d p(static_cast<Eigen::Index>(gaussians_.size()), 3);
  for (std::size_t i = 0; i < gaussians_.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = gaussians_[i].position.transpose();
  }
  return p;
}

GaussianScene load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open PLY '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw FormatError(fmt::format("'{}': missing 'ply' magic", path.string()));
  }
  std::vector<PlyElement> elements;
  bool format_seen = false;
  while (true) {
    if (!std::getline(in, line)) {
      throw FormatError(fmt::format("'{}': header not terminated", path.string()));
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string keyword;
    ss >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
    if (keyword == "format") {
      std::string fmt_name;
      ss >> fmt_name;
      if (fmt_name != "binary_little_endian") {
        throw UnsupportedFormatError(
            fmt::format("'{}': unsupported PLY format '{}' (only binary_little_endian)",
                        path.string(), fmt_name));
      }
      format_seen = true;
    } else if (keyword == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      if (!ss) throw FormatError(fmt::format("'{}': bad element line", path.string()));
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) {
        throw FormatError(fmt::format("'{}': property before element", path.string()));
      }
      PlyProperty p;
      ss >> p.type;
      if (p.type == "list") {
        throw UnsupportedFormatError(
            fmt::format("'{}': list properties are not supported", path.string()));
      }
      ss >> p.name;
      p.size = type_size(p.type);
      if (p.size == 0) {
        throw FormatError(fmt::format("'{}': unknown property type '{}'", path.string(), p.type));
      }
      auto& e = elements.back();
      p.offset = e.stride;
      e.stride += p.size;
      e.properties.push_back(std::move(p));
    } else {
      throw FormatError(fmt::format("'{}': unexpected header line '{}'", path.string(), line));
    }
  }
  if (!format_seen) throw FormatError(fmt::format("'{}': missing format line", path.string()));

  std::size_t skip = 0;
  const PlyElement* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    skip += e.count * e.stride;
  }
  if (!vertex) throw FormatError(fmt::format("'{}': no vertex element", path.string()));

  std::unordered_map<std::string, const PlyProperty*> by_name;
  for (const auto& p : vertex->properties) by_name[p.name] = &p;
  std::vector<std::size_t> offsets;
  for (const auto& name : required_properties()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError(fmt::format("'{}': missing property {}", path.string(), name));
    }
    if (!is_float32(it->second->type)) {
      throw FormatError(fmt::format("'{}': property {} must be float32, got {}", path.string(),
                                    name, it->second->type));
    }
    offsets.push_back(it->second->offset);
  }

  in.seekg(static_cast<std::streamoff>(skip), std::ios::cur);
  std::vector<char> payload(vertex->count * vertex->stride);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
    throw IoError(fmt::format("'{}': truncated vertex payload ({} of {} bytes)", path.string(),
                              in.gcount(), payload.size()));
  }

  std::vector<Gaussian> gaussians(vertex->count);
  for (std::size_t i = 0; i < vertex->count; ++i) {
    const char* row = payload.data() + i * vertex->stride;
    auto read = [&](std::size_t k) {
      float v;
      std::memcpy(&v, row + offsets[k], sizeof(float));
      return static_cast<double>(v);
    };
    Gaussian& g = gaussians[i];
    g.position = {read(0), read(1), read(2)};
    for (std::size_t c = 0; c < kShCoeffs; ++c) g.sh[c] = read(3 + c);
    g.opacity_logit = read(51);
    g.log_scale = {read(52), read(53), read(54)};
    g.rotation = {read(55), read(56), read(57), read(58)};
  }
  return GaussianScene(std::move(gaussians), path.string());
}

void save_ply(const std::filesystem::path& path, const GaussianScene& scene) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write PLY '{}'", path.string()));
  const auto layout = vanilla_layout();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << scene.size() << "\n";
  for (const auto& name : layout) out << "property float " << name << "\n";
  out << "end_header\n";
  std::vector<float> row(layout.size());
  for (const auto& g : scene.gaussians()) {
    std::size_t k = 0;
    for (int i = 0; i < 3; ++i) row[k++] = static_cast<float>(g.position[i]);
    for (int i = 0; i < 3; ++i) row[k++] = 0.0f;
    for (double c : g.sh) row[k++] = static_cast<float>(c);
    row[k++] = static_cast<float>(g.opacity_logit);
    for (int i = 0; i < 3; ++i) row[k++] = static_cast<float>(g.log_scale[i]);
    for (int i = 0; i < 4; ++i) row[k++] = static_cast<float>(g.rotation[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

GaussianScene filter_by_opacity(const GaussianScene& scene, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ArgumentError(fmt::format("opacity threshold {} outside [0, 1]", threshold));
  }
  std::vector<Gaussian> kept;
  for (const auto& g : scene.gaussians()) {
    if (g.opacity() >= threshold) kept.push_back(g);
  }
  return GaussianScene(std::move(kept), scene.source_path());
}

std::vector<std::size_t> subsample_indices(std::size_t count, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("subsample size must be >= 1");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  if (count <= n) return idx;
  // Partial Fisher-Yates over the first n slots.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

GaussianScene subsample_uniform(const GaussianScene& scene, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("subsample size must be >= 1");
  if (scene.size() <= n) return scene;
  std::vector<Gaussian> kept;
  kept.reserve(n);
  for (std::size_t i : subsample_indices(scene.size(), n, seed)) {
    kept.push_back(scene.gaussians()[i]);
  }
  return GaussianScene(std::move(kept), scene.source_path());
}

Eigen::MatrixXd gaussian_input_features(const GaussianScene& scene) {
  require_nonempty(scene, "gaussian_input_features");
  Eigen::MatrixXd f(static_cast<Eigen::Index>(scene.size()),
                    static_cast<Eigen::Index>(kGaussianFeatureDim));
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian& g = scene.gaussians()[i];
    bool finite = g.position.allFinite() && g.rotation.allFinite() && g.log_scale.allFinite() &&
                  std::isfinite(g.opacity_logit);
    for (double c : g.sh) finite = finite && std::isfinite(c);
    const double qn = g.rotation.norm();
    if (!finite || !(qn > 0.0)) {
      throw DataError(fmt::format("Gaussian {} has a non-finite or degenerate field", i));
    }
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 0) = g.opacity();
    for (std::size_t c = 0; c < kShCoeffs; ++c) f(r, static_cast<Eigen::Index>(1 + c)) = g.sh[c];
    const Eigen::Vector4d q = g.rotation / qn;
    for (int c = 0; c < 4; ++c) f(r, 49 + c) = q[c];
    const Vec3 s = g.scale();
    if (!s.allFinite()) {
      throw DataError(fmt::format("Gaussian {} has a non-finite scale", i));
    }
    for (int c = 0; c < 3; ++c) f(r, 53 + c) = s[c];
  }
  return f;
}

void require_nonempty(const GaussianScene& scene, const std::string& stage) {
  if (scene.empty()) {
    throw DataError(fmt::format("{}: scene has no Gaussians (after filtering/subsampling)", stage));
  }
}

GaussianScene prepare_scene(const GaussianScene& raw, double opacity_threshold,
                            std::size_t max_gaussians, std::uint64_t seed) {
  GaussianScene s =
      subsample_uniform(filter_by_opacity(raw, opacity_threshold), max_gaussians, seed);
  require_nonempty(s, "prepare_scene");
  return s;
}

}  // namespace splatloc
