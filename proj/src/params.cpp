// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace splatloc {
namespace {

constexpr char kMagic[] = "SPLATLOC-PARAMS\x01";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

Tensor& ModelParams::add(const std::string& name, Tensor value) {
  if (weights_.contains(name)) {
    throw ArgumentError(fmt::format("duplicate parameter name '{}'", name));
  }
  value.set_requires_grad(true);
  return weights_.emplace(name, std::move(value)).first->second;
}

Tensor& ModelParams::add_normal(const std::string& name, Shape shape, Scalar stddev,
                                std::mt19937_64& rng) {
  std::normal_distribution<Scalar> dist(0.0, stddev);
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return add(name, Tensor::from(std::move(shape), std::move(v)));
}

Tensor& ModelParams::add_constant(const std::string& name, Shape shape, Scalar value) {
  return add(name, Tensor::full(std::move(shape), value));
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = weights_.find(name);
  if (it == weights_.end()) {
    throw ArgumentError(fmt::format("unknown parameter '{}'", name));
  }
  return it->second;
}

bool ModelParams::contains(const std::string& name) const { return weights_.contains(name); }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, w] : weights_) n += w.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [_, w] : weights_) w.zero_grad();
}

void ModelParams::clear_grad() {
  for (auto& [_, w] : weights_) w.clear_grad();
}

bool ModelParams::all_finite() const {
  for (const auto& [_, w] : weights_) {
    for (Scalar v : w.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void ModelParams::adam_step(const AdamOptions& options) {
  for (const auto& [name, w] : weights_) {
    if (!w.has_grad()) {
      throw StateError(fmt::format("adam_step: parameter '{}' has no gradient", name));
    }
  }
  ++step_;
  const Scalar bc1 = 1.0 - std::pow(options.beta1, static_cast<Scalar>(step_));
  const Scalar bc2 = 1.0 - std::pow(options.beta2, static_cast<Scalar>(step_));
  for (auto& [name, w] : weights_) {
    Tensor& t = w;
    auto& m = first_moment_[name];
    auto& v = second_moment_[name];
    if (m.size() != t.numel()) m.assign(t.numel(), 0.0);
    if (v.size() != t.numel()) v.assign(t.numel(), 0.0);
    auto g = t.grad();
    auto x = t.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const Scalar mhat = m[i] / bc1;
      const Scalar vhat = v[i] / bc2;
      x[i] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
    }
    t.clear_grad();
  }
}

std::span<const Scalar> ModelParams::first_moment(const std::string& name) const {
  auto it = first_moment_.find(name);
  if (it == first_moment_.end()) return {};
  return it->second;
}

std::span<const Scalar> ModelParams::second_moment(const std::string& name) const {
  auto it = second_moment_.find(name);
  if (it == second_moment_.end()) return {};
  return it->second;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [name, w] : weights_) out.add(name, w.clone());
  out.first_moment_ = first_moment_;
  out.second_moment_ = second_moment_;
  out.step_ = step_;
  out.metadata_ = metadata_;
  return out;
}

void ModelParams::save(const std::filesystem::path& path) const {
  nlohmann::json index;
  index["format_version"] = 1;
  index["step"] = step_;
  index["metadata"] = metadata_;
  nlohmann::json entries = nlohmann::json::array();
  std::vector<const std::vector<Scalar>*> buffers;
  std::vector<std::vector<Scalar>> weight_copies;
  weight_copies.reserve(weights_.size());
  std::size_t offset = 0;
  auto push = [&](const std::string& name, const std::string& kind, const Shape& shape,
                  const std::vector<Scalar>* buf) {
    entries.push_back(
        {{"name", name}, {"kind", kind}, {"shape", shape}, {"dtype", "f64"}, {"offset", offset}});
    offset += buf->size() * sizeof(Scalar);
    buffers.push_back(buf);
  };
  for (const auto& [name, w] : weights_) {
    weight_copies.emplace_back(w.data().begin(), w.data().end());
    push(name, "weight", w.shape(), &weight_copies.back());
  }
  for (const auto& [name, m] : first_moment_) {
    push(name, "adam_m", get(name).shape(), &m);
  }
  for (const auto& [name, v] : second_moment_) {
    push(name, "adam_v", get(name).shape(), &v);
  }
  index["tensors"] = std::move(entries);
  const std::string header = index.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(kMagic, kMagicSize);
  const std::uint64_t header_size = header.size();
  out.write(reinterpret_cast<const char*>(&header_size), sizeof(header_size));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* buf : buffers) {
    out.write(reinterpret_cast<const char*>(buf->data()),
              static_cast<std::streamsize>(buf->size() * sizeof(Scalar)));
  }
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  if (!in || std::memcmp(magic, kMagic, kMagicSize) != 0) {
    throw FormatError(fmt::format("'{}' is not a parameter file", path.string()));
  }
  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof(header_size));
  if (!in || header_size > (1u << 28)) {
    throw FormatError(fmt::format("'{}': corrupt index", path.string()));
  }
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw IoError(fmt::format("'{}': truncated index", path.string()));
  const nlohmann::json index = nlohmann::json::parse(header);
  if (index.value("format_version", 0) != 1) {
    throw UnsupportedFormatError(
        fmt::format("'{}': unsupported parameter format version", path.string()));
  }
  const std::streamoff data_start = in.tellg();

  ModelParams params;
  params.step_ = index.at("step").get<std::int64_t>();
  params.metadata_ = index.at("metadata");
  for (const auto& e : index.at("tensors")) {
    if (e.at("dtype") != "f64") {
      throw UnsupportedFormatError(
          fmt::format("'{}': unsupported dtype {}", path.string(), e.at("dtype").dump()));
    }
    const Shape shape = e.at("shape").get<Shape>();
    std::vector<Scalar> values(shape_numel(shape));
    in.seekg(data_start + e.at("offset").get<std::streamoff>());
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(Scalar)));
    if (!in) throw IoError(fmt::format("'{}': truncated payload", path.string()));
    const std::string name = e.at("name");
    const std::string kind = e.at("kind");
    if (kind == "weight") {
      params.add(name, Tensor::from(shape, std::move(values)));
    } else if (kind == "adam_m") {
      params.first_moment_[name] = std::move(values);
    } else if (kind == "adam_v") {
      params.second_moment_[name] = std::move(values);
    } else {
      throw FormatError(fmt::format("'{}': unknown entry kind '{}'", path.string(), kind));
    }
  }
  return params;
}

}  // namespace splatloc
