// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatloc/cli.hpp"
#include "splatloc/image.hpp"

using namespace splatloc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "splatloc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

// Small benchmark shared by the pipeline cases; built once per process.
const fs::path& bench_root() {
  static const fs::path root = [] {
    const fs::path dir = fs::temp_directory_path() / "splatloc_test_cli";
    fs::remove_all(dir);
    const std::vector<std::string> small = {
        "--set", "bench.n_gaussians=80", "--set", "bench.n_train_views=4",
        "--set", "bench.n_test_views=2", "--set", "bench.image_size=32"};
    std::vector<std::string> synth = {"synth", "--out", (dir / "bench").string()};
    synth.insert(synth.end(), small.begin(), small.end());
    REQUIRE(run(synth).code == kExitOk);
    const Result train =
        run({"train", "--data", (dir / "bench").string(), "--out", (dir / "train").string(),
             "--set", "max_steps=3", "--log", (dir / "train.log").string()});
    REQUIRE_MESSAGE(train.code == kExitOk, train.err);
    return dir;
  }();
  return root;
}

}  // namespace

TEST_CASE("usage: help, version and bad arguments") {
  CHECK(run({"--help"}).code == kExitOk);
  const Result v = run({"--version"});
  CHECK(v.code == kExitOk);
  CHECK(v.out.find("splatloc") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"--bogus"}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth"}).code == kExitUsage);
  const fs::path out = fs::temp_directory_path() / "splatloc_test_cli_badkey";
  CHECK(run({"synth", "--out", out.string(), "--set", "no_such_key=1"}).code == kExitUsage);
  CHECK(run({"synth", "--out", out.string(), "--set", "bench.image_size=31"}).code == kExitUsage);
}

TEST_CASE("synth and train write their outputs") {
  const fs::path& dir = bench_root();
  CHECK(fs::exists(dir / "bench" / "scene.ply"));
  CHECK(fs::exists(dir / "bench" / "config.resolved"));
  CHECK(fs::exists(dir / "train" / "model.params"));
  CHECK(fs::exists(dir / "train" / "config.resolved"));
  const auto summary = read_json(dir / "train" / "train.json");
  CHECK(summary.at("steps").get<int>() == 3);
  std::ifstream log(dir / "train.log");
  std::string line;
  REQUIRE(std::getline(log, line));
  CHECK(nlohmann::json::parse(line).contains("event"));
}

TEST_CASE("eval writes a parseable report") {
  const fs::path& dir = bench_root();
  const Result r = run({"eval", "--data", (dir / "bench").string(), "--model",
                        (dir / "train" / "model.params").string(), "--out", (dir / "eval").string(),
                        "--set", "theta_c=0"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto report = read_json(dir / "eval" / "report.json");
  CHECK(report.at("per_query").size() == 2);
  CHECK(fs::exists(dir / "eval" / "report.csv"));
  CHECK(fs::exists(dir / "eval" / "config.resolved"));
}

TEST_CASE("localize: failure exits 2, init-pose fallback succeeds") {
  const fs::path& dir = bench_root();
  const fs::path bench = dir / "bench";
  const fs::path image = dir / "blank.png";
  write_png(image, Image8(32, 32));
  const std::vector<std::string> common = {"localize",
                                           "--scene",
                                           (bench / "scene.ply").string(),
                                           "--model",
                                           (dir / "train" / "model.params").string(),
                                           "--image",
                                           image.string(),
                                           "--intrinsics",
                                           (bench / "intrinsics.txt").string()};

  std::vector<std::string> fail = common;
  fail.insert(fail.end(), {"--out", (dir / "loc" / "pose.txt").string(), "--diag",
                           (dir / "loc" / "diag.json").string()});
  CHECK(run(fail).code == kExitLocalizationFailed);
  CHECK(fs::exists(dir / "loc" / "config.resolved"));
  CHECK(read_json(dir / "loc" / "diag.json").is_object());

  // No consensus is forced; the exact test pose seeds refinement instead.
  std::vector<std::string> fallback = common;
  fallback[6] = (bench / "test" / "images" / "0000.png").string();
  fallback.insert(fallback.end(), {"--init-pose", (bench / "test" / "poses.txt").string(), "--set",
                                   "theta_c=1", "--out", (dir / "loc2" / "pose.txt").string()});
  const Result r = run(fallback);
  CHECK_MESSAGE(r.code == kExitOk, r.err);
  CHECK(fs::exists(dir / "loc2" / "pose.txt"));
}

TEST_CASE("render reproduces a benchmark image") {
  const fs::path& dir = bench_root();
  const fs::path bench = dir / "bench";
  const fs::path color = dir / "render" / "color.png";
  const fs::path depth = dir / "render" / "depth.pgm";
  const Result r =
      run({"render", "--scene", (bench / "scene.ply").string(), "--pose",
           (bench / "poses.txt").string(), "--pose-index", "1", "--intrinsics",
           (bench / "intrinsics.txt").string(), "--out", color.string(), depth.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(fs::exists(depth));
  CHECK(read_json(fs::path(depth.string() + ".json")).contains("scale"));

  std::ifstream a(color, std::ios::binary), b(bench / "images" / "0001.png", std::ios::binary);
  const std::string ra((std::istreambuf_iterator<char>(a)), {});
  const std::string rb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ra == rb);
}
