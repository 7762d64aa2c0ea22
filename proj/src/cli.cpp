// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/cli.hpp"

#include <chrono>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splatloc/model.hpp"
#include "splatloc/refinement.hpp"
#include "splatloc/renderer.hpp"
#include "splatloc/run_config.hpp"
#include "splatloc/supervision.hpp"
#include "splatloc/synthetic_bench.hpp"

#ifndef SPLATLOC_VERSION
#define SPLATLOC_VERSION "0.0.0"
#endif
#ifndef SPLATLOC_BUILD_TYPE
#define SPLATLOC_BUILD_TYPE "unknown"
#endif

namespace splatloc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Human-readable lines on stderr plus optional JSON lines in a file.
class Logger {
 public:
  Logger(std::ostream& err, const std::string& path) : err_(err) {
    if (path.empty()) return;
    if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) {
      fs::create_directories(parent);
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*file_) throw IoError(fmt::format("cannot open log '{}'", path));
  }

  void info(const std::string& event, const json& fields = json::object()) {
    write("info", event, fields);
  }
  void error(const std::string& event, const json& fields = json::object()) {
    write("error", event, fields);
  }

 private:
  void write(const std::string& level, const std::string& event, const json& fields) {
    std::string line = fmt::format("splatloc: {}", event);
    for (const auto& [k, v] : fields.items()) line += fmt::format(" {}={}", k, v.dump());
    err_ << line << "\n";
    if (!file_) return;
    json record = fields;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    record["time"] = std::chrono::duration<double>(now).count();
    record["level"] = level;
    record["event"] = event;
    *file_ << record.dump() << "\n";
    file_->flush();
  }

  std::ostream& err_;
  std::unique_ptr<std::ofstream> file_;
};

/// Options every subcommand accepts.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string log_path;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "override a config key, key=value (repeatable)")
      ->allow_extra_args(false);
  sub->add_option("--log", o.log_path, "append JSON-lines log records to this file");
  sub->add_option("--threads", o.threads, "cap on worker threads");
  sub->add_option("--seed", o.seed, "global seed");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = RunConfig::defaults();
  if (!o.config_file.empty()) c.load_file(o.config_file);
  for (const auto& a : o.overrides) c.assign(a);
  if (o.threads) c.set("threads", std::to_string(*o.threads));
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (const std::size_t t = c.count("threads"); t > 0) set_max_threads(t);
  return c;
}

std::uint64_t seed_of(const RunConfig& c) { return c.count("seed"); }

BenchmarkSpec bench_spec(const RunConfig& c) {
  BenchmarkSpec s;
  s.n_gaussians = c.count("bench.n_gaussians");
  s.extent = c.number("bench.extent");
  s.scale_min = c.number("bench.scale_min");
  s.scale_max = c.number("bench.scale_max");
  s.opacity_min = c.number("bench.opacity_min");
  s.opacity_max = c.number("bench.opacity_max");
  s.sh_rest_amplitude = c.number("bench.sh_rest_amplitude");
  s.n_train_views = c.count("bench.n_train_views");
  s.n_test_views = c.count("bench.n_test_views");
  s.image_size = static_cast<int>(c.count("bench.image_size"));
  s.fov_deg = c.number("bench.fov_deg");
  s.orbit_radius = c.number("bench.orbit_radius");
  s.orbit_jitter = c.number("bench.orbit_jitter");
  s.min_elevation_deg = c.number("bench.min_elevation_deg");
  s.max_elevation_deg = c.number("bench.max_elevation_deg");
  s.min_coverage = c.number("bench.min_coverage");
  s.seed = seed_of(c);
  s.validate();
  return s;
}

/// Applies a non-auto theta_c to `model` and records the effective value.
void apply_threshold(RunConfig& c, ModelConfig& model) {
  if (c.text("theta_c") != "auto") model.match.theta_c = c.number("theta_c");
  c.set("theta_c", fmt::format("{}", model.match.theta_c));
}

ModelConfig model_from_dims(RunConfig& c) {
  const std::string& dims = c.text("dims");
  ModelConfig m;
  if (dims == "toy") {
    m = ModelConfig::toy();
  } else if (dims == "full") {
    m = ModelConfig::full();
  } else {
    throw ConfigError(fmt::format("dims must be toy or full, got '{}'", dims));
  }
  apply_threshold(c, m);
  return m;
}

/// Loads weights and applies the configured coarse threshold.
ModelParams load_model(const fs::path& path, RunConfig& c, ModelConfig& model) {
  ModelParams params = ModelParams::load(path);
  model = model_config(params);
  apply_threshold(c, model);
  params.metadata()["model_config"] = model.to_json();
  return params;
}

RefinementConfig refinement_config(const RunConfig& c) {
  RefinementConfig r;
  r.iterations = c.count("refine_iters");
  r.matcher = parse_matcher(c.text("matcher"));
  r.min_matches = c.count("min_matches");
  r.alpha_floor = c.number("alpha_floor");
  r.ransac.inlier_px = c.number("refine_inlier_px");
  r.ransac.seed = seed_of(c);
  r.validate();
  return r;
}

LocalizeConfig localize_config(const RunConfig& c) {
  LocalizeConfig l;
  l.coarse_only = c.flag("coarse_only");
  l.refine = c.flag("refine");
  l.ransac.inlier_px = c.number("inlier_px");
  l.ransac.max_iterations = c.count("ransac_iters");
  l.ransac.seed = seed_of(c);
  l.coarse_inlier_px = c.number("coarse_inlier_px");
  l.refinement = refinement_config(c);
  return l;
}

GaussianScene load_scene(const fs::path& path, const RunConfig& c) {
  return prepare_scene(load_ply(path), c.number("opacity_threshold"), c.count("max_gaussians"),
                       seed_of(c));
}

void write_json(const fs::path& path, const json& j) {
  if (const fs::path parent = path.parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
}

json pose_json(const Pose& p) {
  const auto& q = p.rotation;
  return {{"qw", q.w()},
          {"qx", q.x()},
          {"qy", q.y()},
          {"qz", q.z()},
          {"tx", p.translation.x()},
          {"ty", p.translation.y()},
          {"tz", p.translation.z()}};
}

json rounds_json(const std::vector<RefinementRound>& rounds) {
  json out = json::array();
  for (const auto& r : rounds) {
    out.push_back({{"matches", r.matches},
                   {"lifted", r.lifted},
                   {"inliers", r.inliers},
                   {"previous_inliers", r.previous_inliers},
                   {"adopted", r.adopted},
                   {"skip_reason", r.skip_reason}});
  }
  return out;
}

Pose single_pose(const fs::path& path, std::size_t index) {
  const std::vector<Pose> poses = read_poses(path);
  if (index >= poses.size()) {
    throw DataError(
        fmt::format("'{}' holds {} poses; index {} requested", path.string(), poses.size(), index));
  }
  return poses[index];
}

/// Matches rescaled from model-input to query-image pixels.
void dump_matches(const fs::path& path, std::vector<FineMatch> matches, double sx, double sy) {
  for (auto& m : matches) {
    m.pixel = {(m.pixel.x() + 0.5) * sx - 0.5, (m.pixel.y() + 0.5) * sy - 0.5};
    m.variance *= sx * sy;
  }
  write_matches_csv(path, matches);
}

fs::path parent_or_cwd(const fs::path& file) {
  return file.parent_path().empty() ? fs::path(".") : file.parent_path();
}

// ---- Subcommands --------------------------------------------------------------

struct SynthArgs {
  std::string out;
};

int run_synth(const SynthArgs& a, RunConfig& c, Logger& log) {
  const BenchmarkSpec spec = bench_spec(c);
  log.info("synth.start", {{"out", a.out}, {"seed", spec.seed}});
  write_benchmark(a.out, spec);
  c.write_resolved(a.out);
  log.info("synth.done", {{"train_views", spec.n_train_views}, {"test_views", spec.n_test_views}});
  return kExitOk;
}

struct TrainArgs {
  std::vector<std::string> data;
  std::string out;
  std::string init;
};

int run_train(const TrainArgs& a, RunConfig& c, Logger& log) {
  ModelConfig model;
  ModelParams params;
  if (a.init.empty()) {
    model = model_from_dims(c);
    params = init_model(model, seed_of(c));
  } else {
    params = load_model(a.init, c, model);
  }
  std::vector<TrainingScene> scenes;
  for (const auto& dir : a.data) {
    TrainingScene s = load_training_scene(dir);
    s.scene =
        prepare_scene(s.scene, c.number("opacity_threshold"), c.count("max_gaussians"), seed_of(c));
    s.name = fs::path(dir).filename().string();
    scenes.push_back(std::move(s));
  }
  TrainConfig tc;
  tc.epochs = c.count("epochs");
  tc.max_steps = c.count("max_steps");
  tc.adam.lr = c.number("lr");
  tc.seed = seed_of(c);
  tc.coarse_only = c.flag("coarse_only");
  tc.checkpoint_every = c.count("checkpoint_every");
  tc.checkpoint_dir = fs::path(a.out) / "checkpoints";
  double window = 0.0;
  std::size_t window_steps = 0;
  tc.on_step = [&](const StepRecord& r) {
    window += r.total;
    ++window_steps;
    if (r.step == 1 || r.step % 100 == 0) {
      log.info("train.step", {{"step", r.step},
                              {"epoch", r.epoch},
                              {"total", r.total},
                              {"coarse", r.coarse},
                              {"fine", r.fine},
                              {"window_mean", window / static_cast<double>(window_steps)}});
      window = 0.0;
      window_steps = 0;
    }
  };
  log.info("train.start",
           {{"scenes", scenes.size()}, {"dims", c.text("dims")}, {"coarse_only", tc.coarse_only}});
  fs::create_directories(a.out);
  c.write_resolved(a.out);
  const std::vector<StepRecord> records = train(scenes, params, tc);
  params.save(fs::path(a.out) / "model.params");
  write_loss_log(fs::path(a.out) / "loss.csv", records);

  json summary{{"steps", records.size()}, {"coarse_only", tc.coarse_only}};
  std::size_t skipped = 0;
  for (const auto& r : records) skipped += r.skipped;
  summary["skipped_steps"] = skipped;
  if (!records.empty()) {
    const double first = records.front().total, last = records.back().total;
    summary["first_total"] = first;
    summary["final_total"] = last;
    summary["relative_decrease"] = first > 0.0 ? (first - last) / first : 0.0;
  }
  write_json(fs::path(a.out) / "train.json", summary);
  log.info("train.done", summary);
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string out;
};

int run_eval(const EvalArgs& a, RunConfig& c, Logger& log) {
  ModelConfig model;
  const ModelParams params = load_model(a.model, c, model);
  const Benchmark bench = load_benchmark(a.data);
  const GaussianScene scene = prepare_scene(bench.scene, c.number("opacity_threshold"),
                                            c.count("max_gaussians"), seed_of(c));
  EvalConfig ec;
  ec.localize = localize_config(c);
  ec.t_thresh = c.number("t_thresh");
  ec.r_thresh_deg = c.number("r_thresh_deg");
  ec.out_dir = a.out;
  ec.write_overlays = c.flag("overlays");
  c.write_resolved(a.out);
  log.info("eval.start",
           {{"queries", bench.test.images.size()}, {"coarse_only", ec.localize.coarse_only}});
  const EvalReport report = evaluate(params, scene, bench.test, ec);
  log.info("eval.done", {{"recall_unrefined", report.recall_unrefined},
                         {"recall_refined", report.recall_refined},
                         {"median_t_refined", std::isfinite(report.median_refined.translation)
                                                  ? json(report.median_refined.translation)
                                                  : json(nullptr)}});
  return kExitOk;
}

struct LocalizeArgs {
  std::string scene, model, image, intrinsics, init_pose, out, diag, dump;
};

int run_localize(const LocalizeArgs& a, RunConfig& c, Logger& log) {
  ModelConfig model;
  const ModelParams params = load_model(a.model, c, model);
  const GaussianScene scene = load_scene(a.scene, c);
  const Image8 query = read_image(a.image);
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  const LocalizeConfig lc = localize_config(c);
  c.write_resolved(parent_or_cwd(a.out));

  const SceneContext context = prepare_context(scene, params, model);
  LocalizeResult result = localize(query, context, params, model, k, lc);
  json diag = result.diagnostics();
  if (!result.pose && !a.init_pose.empty()) {
    // No consensus: fall back to refining the supplied initial pose.
    const Pose init = single_pose(a.init_pose, 0);
    const RefinementResult r =
        refine(to_float(query), init, scene, k, lc.refinement, MatcherModel{&params, model});
    diag["fallback_refinement"] = rounds_json(r.rounds);
    if (!r.skipped) result.pose = r.pose;
  }
  if (!a.dump.empty()) {
    const double side = model.enc2d.image_size;
    dump_matches(a.dump, result.matches, query.width / side, query.height / side);
  }
  diag["success"] = result.pose.has_value();
  if (result.pose) diag["pose"] = pose_json(*result.pose);
  if (!a.diag.empty()) write_json(a.diag, diag);
  if (!result.pose) {
    log.error("localize.failed", {{"reason", result.failure}});
    return kExitLocalizationFailed;
  }
  write_poses(a.out, std::span(&*result.pose, 1));
  log.info("localize.done", {{"inliers", result.inliers}, {"fine_matches", result.fine_matches}});
  return kExitOk;
}

struct RefineArgs {
  std::string scene, model, image, intrinsics, init_pose, out, diag;
  std::size_t pose_index = 0;
};

int run_refine(const RefineArgs& a, RunConfig& c, Logger& log) {
  const GaussianScene scene = load_scene(a.scene, c);
  const Image8 query = read_image(a.image);
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  const Pose init = single_pose(a.init_pose, a.pose_index);
  const RefinementConfig rc = refinement_config(c);
  std::optional<ModelParams> params;
  MatcherModel matcher;
  if (!a.model.empty()) {
    ModelConfig model;
    params = load_model(a.model, c, model);
    matcher = MatcherModel{&*params, model};
  }
  c.write_resolved(parent_or_cwd(a.out));
  const RefinementResult r = refine(to_float(query), init, scene, k, rc, matcher);
  write_poses(a.out, std::span(&r.pose, 1));
  if (!a.diag.empty()) {
    write_json(
        a.diag,
        {{"skipped", r.skipped}, {"rounds", rounds_json(r.rounds)}, {"pose", pose_json(r.pose)}});
  }
  log.info("refine.done", {{"skipped", r.skipped}, {"rounds", r.rounds.size()}});
  return kExitOk;
}

struct RenderArgs {
  std::string scene, pose, intrinsics;
  std::vector<std::string> out;
  std::size_t pose_index = 0;
};

int run_render(const RenderArgs& a, RunConfig& c, Logger& log) {
  const GaussianScene scene = load_ply(a.scene);
  require_nonempty(scene, "render");
  const Pose pose = single_pose(a.pose, a.pose_index);
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  const fs::path color = a.out.at(0);
  const fs::path depth =
      a.out.size() > 1 ? fs::path(a.out[1]) : fs::path(color).replace_extension(".pgm");
  c.write_resolved(parent_or_cwd(color));
  const RenderOutput r = render_tile_parallel(scene, pose, k);
  write_png(color, to_8bit(r.color));
  const DepthEncoding d = encode_depth16(r.depth);
  write_pgm16(depth, k.width, k.height, d.values);
  write_json(fs::path(depth.string() + ".json"),
             {{"scale", d.scale}, {"encoding", "value = round(depth * scale)"}});
  log.info("render.done", {{"color", color.string()}, {"depth", depth.string()}});
  return kExitOk;
}

}  // namespace

std::string version_string() {
  return fmt::format("splatloc {} ({} build, {} {}, 64-bit floating point)", SPLATLOC_VERSION,
                     SPLATLOC_BUILD_TYPE,
#if defined(__clang__)
                     "clang",
#elif defined(__GNUC__)
                     "gcc",
#else
                     "c++",
#endif
                     __VERSION__);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Camera localization against 3D Gaussian Splatting scenes", "splatloc"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.footer("Config keys (key = value, defaults shown):\n  " +
             fmt::format("{}", fmt::join(RunConfig::defaults().help(), "\n  ")));

  CommonOptions common;
  SynthArgs synth;
  TrainArgs train_args;
  EvalArgs eval;
  LocalizeArgs loc;
  RefineArgs ref;
  RenderArgs ren;
  std::optional<std::size_t> ransac_iters;
  std::optional<double> inlier_px;
  bool coarse_only = false;

  auto* s = app.add_subcommand("synth", "generate a synthetic benchmark directory");
  s->add_option("--out", synth.out, "output directory")->required();

  auto* t = app.add_subcommand("train", "train the matcher on posed scenes");
  t->add_option("--data", train_args.data, "scene directory (repeatable)")
      ->required()
      ->check(CLI::ExistingDirectory)
      ->allow_extra_args(false);
  t->add_option("--out", train_args.out, "output directory")->required();
  t->add_option("--init", train_args.init, "continue from these weights")->check(CLI::ExistingFile);

  auto* e = app.add_subcommand("eval", "localize every held-out view and report errors");
  e->add_option("--data", eval.data, "benchmark directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  e->add_option("--model", eval.model, "trained weights")->required()->check(CLI::ExistingFile);
  e->add_option("--out", eval.out, "output directory")->required();

  auto* l = app.add_subcommand("localize", "estimate the pose of one query image");
  l->add_option("--scene", loc.scene, "scene PLY")->required()->check(CLI::ExistingFile);
  l->add_option("--model", loc.model, "trained weights")->required()->check(CLI::ExistingFile);
  l->add_option("--image", loc.image, "query image (PNG or PPM)")
      ->required()
      ->check(CLI::ExistingFile);
  l->add_option("--intrinsics", loc.intrinsics, "intrinsics file")
      ->required()
      ->check(CLI::ExistingFile);
  l->add_option("--init-pose", loc.init_pose, "pose to refine when the matcher finds no consensus")
      ->check(CLI::ExistingFile);
  l->add_option("--out", loc.out, "output pose file")->required();
  l->add_option("--diag", loc.diag, "diagnostics JSON");
  l->add_option("--dump-matches", loc.dump, "CSV of the matches fed to PnP");

  auto* r = app.add_subcommand("refine", "refine a pose by render-match-lift");
  r->add_option("--scene", ref.scene, "scene PLY")->required()->check(CLI::ExistingFile);
  r->add_option("--image", ref.image, "query image")->required()->check(CLI::ExistingFile);
  r->add_option("--intrinsics", ref.intrinsics, "intrinsics file")
      ->required()
      ->check(CLI::ExistingFile);
  r->add_option("--init-pose", ref.init_pose, "starting pose file")
      ->required()
      ->check(CLI::ExistingFile);
  r->add_option("--pose-index", ref.pose_index, "line of the pose file to use");
  r->add_option("--model", ref.model, "trained weights (matcher = model)")
      ->check(CLI::ExistingFile);
  r->add_option("--out", ref.out, "output pose file")->required();
  r->add_option("--diag", ref.diag, "diagnostics JSON");

  auto* d = app.add_subcommand("render", "render color and depth from a pose");
  d->add_option("--scene", ren.scene, "scene PLY")->required()->check(CLI::ExistingFile);
  d->add_option("--pose", ren.pose, "pose file")->required()->check(CLI::ExistingFile);
  d->add_option("--pose-index", ren.pose_index, "line of the pose file to use");
  d->add_option("--intrinsics", ren.intrinsics, "intrinsics file")
      ->required()
      ->check(CLI::ExistingFile);
  d->add_option("--out", ren.out, "color PNG, then optional 16-bit depth PGM")
      ->required()
      ->expected(1, 2);

  for (auto* sub : {s, t, e, l, r, d}) add_common(sub, common);
  for (auto* sub : {e, l}) {
    sub->add_option("--ransac-iters", ransac_iters, "maximum RANSAC iterations");
    sub->add_option("--inlier-px", inlier_px, "RANSAC inlier threshold, pixels");
  }
  for (auto* sub : {t, e, l}) sub->add_flag("--coarse-only", coarse_only, "skip the fine stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::unique_ptr<Logger> log;
  try {
    log = std::make_unique<Logger>(err, common.log_path);
    RunConfig config = resolve_config(common);
    if (ransac_iters) config.set("ransac_iters", std::to_string(*ransac_iters));
    if (inlier_px) config.set("inlier_px", fmt::format("{}", *inlier_px));
    if (coarse_only) config.set("coarse_only", "true");
    if (s->parsed()) return run_synth(synth, config, *log);
    if (t->parsed()) return run_train(train_args, config, *log);
    if (e->parsed()) return run_eval(eval, config, *log);
    if (l->parsed()) return run_localize(loc, config, *log);
    if (r->parsed()) return run_refine(ref, config, *log);
    return run_render(ren, config, *log);
  } catch (const std::exception& ex) {
    if (log) {
      log->error("error", {{"message", ex.what()}});
    } else {
      err << "splatloc: error: " << ex.what() << "\n";
    }
    return kExitUsage;
  }
}

}  // namespace splatloc
