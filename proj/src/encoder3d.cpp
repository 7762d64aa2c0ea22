// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/encoder3d.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

namespace splatloc {
namespace {

using VoxelKey = std::array<std::int64_t, 3>;

VoxelKey voxel_of(const Eigen::RowVector3d& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
          static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::size_t h = 1469598103934665603ull;
    for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
    return h;
  }
};

// Exact radius search through a hash grid with cell side = radius.
class NeighborGrid {
 public:
  NeighborGrid(const Eigen::MatrixX3d& points, double radius) : points_(points), radius_(radius) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      cells_[voxel_of(points.row(i), radius)].push_back(static_cast<std::size_t>(i));
    }
  }

  // Ascending indices of points within `radius` of row p (including p).
  std::vector<std::size_t> query(Eigen::Index p) const {
    std::vector<std::size_t> out;
    const VoxelKey c = voxel_of(points_.row(p), radius_);
    const double r2 = radius_ * radius_;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells_.end()) continue;
          for (std::size_t q : it->second) {
            if ((points_.row(static_cast<Eigen::Index>(q)) - points_.row(p)).squaredNorm() <= r2) {
              out.push_back(q);
            }
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  const Eigen::MatrixX3d& points_;
  double radius_;
  std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash> cells_;
};

// Minimum-energy arrangement of 14 unit vectors (Thomson problem).
constexpr double kShell[14][3] = {
    {0.393609011063, -0.191055981052, 0.899204959125},
    {0.965647485967, 0.038918370900, 0.256924684009},
    {-0.476776534131, 0.871798453249, -0.112479302159},
    {-0.354929795771, -0.626963291434, 0.693499726941},
    {0.545326969965, 0.781435896479, -0.303276170384},
    {-0.531430127702, -0.832896249864, -0.154485780358},
    {0.316962916644, 0.767555591458, 0.557129180257},
    {-0.979544328229, 0.012541982485, 0.200837266733},
    {0.040608347202, -0.602921897912, -0.796766055474},
    {0.476776534131, -0.871798453249, 0.112479302159},
    {0.011255374188, 0.410869244504, -0.911624802467},
    {0.789147154036, -0.167014587530, -0.591060823291},
    {-0.751180274909, 0.026422287506, -0.659568083908},
    {-0.445472732453, 0.383108634461, 0.809185898816},
};

std::string param_name(std::size_t stage, std::size_t layer, const char* what) {
  return fmt::format("enc3d.stage{}.layer{}.{}", stage + 1, layer + 1, what);
}

}  // namespace

GridPooling grid_pooling(const Eigen::MatrixX3d& points, double cell) {
  if (!(cell > 0.0)) throw ArgumentError(fmt::format("grid cell must be positive, got {}", cell));
  if (points.rows() == 0) throw ArgumentError("grid_pooling: no points");
  std::map<VoxelKey, std::vector<std::size_t>> voxels;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    voxels[voxel_of(points.row(i), cell)].push_back(static_cast<std::size_t>(i));
  }
  GridPooling out;
  out.centroids.resize(static_cast<Eigen::Index>(voxels.size()), 3);
  out.assignment.resize(static_cast<std::size_t>(points.rows()));
  auto pool =
      std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(voxels.size()), points.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(points.rows()));
  Eigen::Index row = 0;
  for (const auto& [key, members] : voxels) {
    Eigen::RowVector3d sum = Eigen::RowVector3d::Zero();
    const double w = 1.0 / static_cast<double>(members.size());
    for (std::size_t m : members) {
      sum += points.row(static_cast<Eigen::Index>(m));
      out.assignment[m] = static_cast<std::size_t>(row);
      trips.emplace_back(row, static_cast<Eigen::Index>(m), w);
    }
    out.centroids.row(row) = sum * w;
    ++row;
  }
  pool->setFromTriplets(trips.begin(), trips.end());
  out.pool = std::move(pool);
  return out;
}

Downsampled grid_downsample(const Eigen::MatrixX3d& points, const Tensor& features, double cell) {
  if (features.rank() != 2 || features.dim(0) != static_cast<std::size_t>(points.rows())) {
    throw ShapeError(fmt::format("grid_downsample: {} points but features {}", points.rows(),
                                 shape_to_string(features.shape())));
  }
  GridPooling g = grid_pooling(points, cell);
  return {std::move(g.centroids), sparse_mm(g.pool, features), std::move(g.assignment)};
}

Eigen::MatrixX3d default_kernel_points(double sigma) {
  Eigen::MatrixX3d k(15, 3);
  k.row(0).setZero();
  for (int i = 0; i < 14; ++i) {
    k.row(i + 1) << kShell[i][0], kShell[i][1], kShell[i][2];
  }
  k.bottomRows(14) *= sigma;
  return k;
}

std::shared_ptr<const SparseMatrix> kpconv_operator(const Eigen::MatrixX3d& points, double radius,
                                                    const KernelGeometry& kernel) {
  if (!(radius > 0.0) || !(kernel.sigma > 0.0)) {
    throw ArgumentError("kpconv: radius and sigma must be positive");
  }
  const Eigen::Index n = points.rows();
  const Eigen::Index k = kernel.points.rows();
  NeighborGrid grid(points, radius);
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto neighbors = grid.query(p);
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      for (std::size_t q : neighbors) {
        const Eigen::RowVector3d offset =
            points.row(static_cast<Eigen::Index>(q)) - points.row(p) - kernel.points.row(kk);
        const double influence = 1.0 - offset.norm() / kernel.sigma;
        if (influence > 0.0) {
          trips.emplace_back(p * k + kk, static_cast<Eigen::Index>(q), influence);
        }
      }
    }
  }
  auto op = std::make_shared<SparseMatrix>(n * k, n);
  op->setFromTriplets(trips.begin(), trips.end());
  return op;
}

Tensor kpconv_layer(const Tensor& features, std::shared_ptr<const SparseMatrix> op,
                    const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 3 || features.rank() != 2 || weight.dim(1) != features.dim(1)) {
    throw ShapeError(fmt::format("kpconv: features {} incompatible with weight {}",
                                 shape_to_string(features.shape()),
                                 shape_to_string(weight.shape())));
  }
  const std::size_t n = features.dim(0);
  const std::size_t k = weight.dim(0), cin = weight.dim(1), cout = weight.dim(2);
  if (static_cast<std::size_t>(op->rows()) != n * k) {
    throw ShapeError(fmt::format("kpconv: operator has {} rows, expected {}x{}", op->rows(), n, k));
  }
  Tensor gathered = reshape(sparse_mm(std::move(op), features), {n, k * cin});
  Tensor out = matmul(gathered, reshape(weight, {k * cin, cout}));
  return leaky_relu(add_bias(out, bias), 0.1);
}

Tensor kpconv_layer(const Eigen::MatrixX3d& points, const Tensor& features, double radius,
                    const KernelGeometry& kernel, const Tensor& weight, const Tensor& bias) {
  return kpconv_layer(features, kpconv_operator(points, radius, kernel), weight, bias);
}

ScenePlan plan_scene(const GaussianScene& scene, const Encoder3dConfig& config) {
  require_nonempty(scene, "encode_scene");
  if (config.channels.empty()) throw ConfigError("enc3d: at least one stage required");
  ScenePlan plan;
  const Eigen::MatrixXd f = gaussian_input_features(scene);
  std::vector<double> values(static_cast<std::size_t>(f.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), f.rows(), f.cols()) = f;
  plan.inputs = Tensor::from({scene.size(), kGaussianFeatureDim}, std::move(values));

  if (!(config.cell_divisor > 0.0)) throw ConfigError("enc3d cell divisor must be positive");
  double cell =
      config.base_cell > 0.0 ? config.base_cell : scene.bbox().diagonal() / config.cell_divisor;
  if (!(cell > 0.0)) cell = 1e-3;  // single-point scenes have a zero diagonal
  plan.base_cell = cell;

  Eigen::MatrixX3d points = scene.positions();
  plan.stage_trace.push_back(static_cast<std::size_t>(points.rows()));
  for (std::size_t s = 0; s < config.channels.size(); ++s) {
    const double radius = config.radius_scale * cell;
    const KernelGeometry kernel{default_kernel_points(radius / 2.0), radius / 2.0};
    ScenePlan::Stage stage;
    stage.points = points;
    stage.conv = kpconv_operator(points, radius, kernel);
    stage.pooling = grid_pooling(points, cell);
    points = stage.pooling.centroids;
    plan.stage_trace.push_back(static_cast<std::size_t>(points.rows()));
    plan.stages.push_back(std::move(stage));
    cell *= 2.0;
  }
  if (points.rows() < 4) {
    throw ConfigError(fmt::format(
        "only {} scene points survive {} downsampling stages (base cell {}); the scene is "
        "too small for this cell size, set a smaller enc3d_base_cell",
        points.rows(), config.channels.size(), plan.base_cell));
  }
  return plan;
}

SceneEncoding encode_scene(const ScenePlan& plan, const ModelParams& params,
                           const Encoder3dConfig& config) {
  if (plan.stages.size() != config.channels.size()) {
    throw ConfigError("enc3d: plan and config disagree on the number of stages");
  }
  Tensor x = plan.inputs;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const auto& stage = plan.stages[s];
    for (std::size_t l = 0; l < 2; ++l) {
      x = kpconv_layer(x, stage.conv, params.get(param_name(s, l, "weight")),
                       params.get(param_name(s, l, "bias")));
    }
    x = sparse_mm(stage.pooling.pool, x);
  }
  // Unit-scale rows so scene content is not swamped by the positional
  // encodings added during alignment.
  x = layer_norm(x, params.get("enc3d.out_norm.gamma"), params.get("enc3d.out_norm.beta"));
  SceneEncoding out;
  out.points = plan.stages.back().pooling.centroids;
  out.features = x;
  out.stage_trace = plan.stage_trace;
  return out;
}

SceneEncoding encode_scene(const GaussianScene& scene, const ModelParams& params,
                           const Encoder3dConfig& config) {
  return encode_scene(plan_scene(scene, config), params, config);
}

void init_encoder3d(ModelParams& params, const Encoder3dConfig& config, std::mt19937_64& rng) {
  constexpr std::size_t kKernel = 15;
  std::size_t cin = config.input_dim;
  for (std::size_t s = 0; s < config.channels.size(); ++s) {
    const std::size_t cout = config.channels[s];
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t in = l == 0 ? cin : cout;
      const double stddev = std::sqrt(2.0 / static_cast<double>(kKernel * in));
      params.add_normal(param_name(s, l, "weight"), {kKernel, in, cout}, stddev, rng);
      params.add_constant(param_name(s, l, "bias"), {cout}, 0.0);
    }
    cin = cout;
  }
  params.add_constant("enc3d.out_norm.gamma", {cin}, 1.0);
  params.add_constant("enc3d.out_norm.beta", {cin}, 0.0);
}

}  // namespace splatloc
