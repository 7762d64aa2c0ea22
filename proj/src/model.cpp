// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/model.hpp"

#include <random>

#include <fmt/format.h>

namespace splatloc {

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.enc3d.channels = {16, 32, 64};
  c.enc2d.block_channels = {32, 48, 64, 64};
  c.enc2d.coarse_dim = 64;
  c.enc2d.fine_dim = 32;
  c.enc2d.image_size = 64;
  // Coarser voxels keep the final stage near one point per covered patch.
  c.enc3d.cell_divisor = 20.0;
  // Two interleave steps generalize better to unseen views at this data size.
  c.align.layers = 2;
  // About two scene points share each 8-px patch at toy scale, which caps the
  // row-softmax factor near 0.5; 0.3 would reject most correct matches.
  c.match.theta_c = 0.1;
  return c;
}

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.enc3d.channels = {128, 256, 512};
  c.enc2d.block_channels = {64, 128, 256, 256};
  c.enc2d.coarse_dim = 512;
  c.enc2d.fine_dim = 128;
  c.enc2d.image_size = 480;
  c.align.heads = 8;
  return c;
}

void ModelConfig::validate() const {
  if (enc3d.output_dim() != enc2d.coarse_dim) {
    throw ConfigError(fmt::format("scene feature width {} differs from coarse image width {}",
                                  enc3d.output_dim(), enc2d.coarse_dim));
  }
  if (align.heads == 0 || coarse_dim() % align.heads != 0) {
    throw ConfigError(
        fmt::format("{} attention heads do not divide width {}", align.heads, coarse_dim()));
  }
  if (match.window == 0 || match.window % 2 == 0) {
    throw ConfigError(fmt::format("fine window must be odd, got {}", match.window));
  }
  if (!(match.temperature > 0.0)) throw ConfigError("matching temperature must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"enc3d",
       {{"channels", enc3d.channels},
        {"base_cell", enc3d.base_cell},
        {"cell_divisor", enc3d.cell_divisor},
        {"radius_scale", enc3d.radius_scale}}},
      {"enc2d",
       {{"block_channels", enc2d.block_channels},
        {"fine_dim", enc2d.fine_dim},
        {"coarse_dim", enc2d.coarse_dim},
        {"image_size", enc2d.image_size},
        {"mean", enc2d.mean},
        {"stddev", enc2d.stddev}}},
      {"align", {{"layers", align.layers}, {"heads", align.heads}, {"ff_mult", align.ff_mult}}},
      {"match",
       {{"theta_c", match.theta_c}, {"temperature", match.temperature}, {"window", match.window}}},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    const auto& e3 = j.at("enc3d");
    c.enc3d.channels = e3.at("channels").get<std::vector<std::size_t>>();
    c.enc3d.base_cell = e3.at("base_cell").get<double>();
    c.enc3d.cell_divisor = e3.at("cell_divisor").get<double>();
    c.enc3d.radius_scale = e3.at("radius_scale").get<double>();
    const auto& e2 = j.at("enc2d");
    c.enc2d.block_channels = e2.at("block_channels").get<std::array<std::size_t, 4>>();
    c.enc2d.fine_dim = e2.at("fine_dim").get<std::size_t>();
    c.enc2d.coarse_dim = e2.at("coarse_dim").get<std::size_t>();
    c.enc2d.image_size = e2.at("image_size").get<int>();
    c.enc2d.mean = e2.at("mean").get<std::array<double, 3>>();
    c.enc2d.stddev = e2.at("stddev").get<std::array<double, 3>>();
    const auto& a = j.at("align");
    c.align.layers = a.at("layers").get<std::size_t>();
    c.align.heads = a.at("heads").get<std::size_t>();
    c.align.ff_mult = a.at("ff_mult").get<std::size_t>();
    const auto& m = j.at("match");
    c.match.theta_c = m.at("theta_c").get<double>();
    c.match.temperature = m.at("temperature").get<double>();
    c.match.window = m.at("window").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed model config: {}", e.what()));
  }
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  std::mt19937_64 rng(seed);
  init_encoder3d(params, config.enc3d, rng);
  init_encoder2d(params, config.enc2d, rng);
  init_alignment(params, config.align, config.coarse_dim(), rng);
  init_matching(params, config.coarse_dim(), config.fine_dim(), config.align.ff_mult, rng);
  params.metadata()["model_config"] = config.to_json();
  return params;
}

ModelConfig model_config(const ModelParams& params) {
  if (!params.metadata().contains("model_config")) {
    throw ConfigError("model file carries no model_config metadata");
  }
  return ModelConfig::from_json(params.metadata().at("model_config"));
}

CoarseForward forward_coarse(const ScenePlan& plan, const Tensor& image, const ModelParams& params,
                             const ModelConfig& config) {
  CoarseForward out;
  out.scene = encode_scene(plan, params, config.enc3d);
  out.image = encode_image(image, params, config.enc2d);
  out.aligned = align(out.scene.features, out.scene.points, out.image.coarse, out.image.grid,
                      params, config.align);
  out.scores = coarse_scores(out.aligned, params, config.match);
  return out;
}

}  // namespace splatloc
