// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "splatloc/common.hpp"
#include "splatloc/run_config.hpp"

using namespace splatloc;

namespace {

std::filesystem::path write_file(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("splatloc_test_" + name);
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("defaults: typed access") {
  const RunConfig c = RunConfig::defaults();
  CHECK(c.count("seed") == 0);
  CHECK(c.number("lr") == 1e-4);
  CHECK(c.flag("refine"));
  CHECK_FALSE(c.flag("coarse_only"));
  CHECK(c.text("theta_c") == "auto");
  CHECK_FALSE(c.overridden("seed"));
  CHECK(c.declared("bench.image_size"));
  CHECK_FALSE(c.declared("nope"));
}

TEST_CASE("assign: overrides, whitespace and unknown keys") {
  RunConfig c = RunConfig::defaults();
  c.assign("seed=5");
  c.assign("  lr =  0.002 ");
  CHECK(c.count("seed") == 5);
  CHECK(c.number("lr") == 0.002);
  CHECK(c.overridden("seed"));
  CHECK_THROWS_AS(c.assign("no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(c.assign("seed"), ConfigError);
  CHECK_THROWS_AS(c.assign("=3"), ConfigError);
  CHECK_THROWS_AS(c.text("no_such_key"), ConfigError);
}

TEST_CASE("typed access rejects malformed values") {
  RunConfig c = RunConfig::defaults();
  c.set("lr", "fast");
  CHECK_THROWS_AS(c.number("lr"), ConfigError);
  c.set("lr", "1e-4x");
  CHECK_THROWS_AS(c.number("lr"), ConfigError);
  c.set("lr", "inf");
  CHECK_THROWS_AS(c.number("lr"), ConfigError);
  c.set("seed", "-1");
  CHECK_THROWS_AS(c.count("seed"), ConfigError);
  c.set("seed", "2.5");
  CHECK_THROWS_AS(c.count("seed"), ConfigError);
  c.set("refine", "maybe");
  CHECK_THROWS_AS(c.flag("refine"), ConfigError);
  for (const char* v : {"true", "1", "yes"}) {
    c.set("refine", v);
    CHECK(c.flag("refine"));
  }
  for (const char* v : {"false", "0", "no"}) {
    c.set("refine", v);
    CHECK_FALSE(c.flag("refine"));
  }
}

TEST_CASE("load_file: comments, blank lines and line-numbered errors") {
  RunConfig c = RunConfig::defaults();
  c.load_file(write_file("cfg_ok", "# comment\n\nseed = 9\r\n  # indented comment\nepochs=3\n"));
  CHECK(c.count("seed") == 9);
  CHECK(c.count("epochs") == 3);

  RunConfig d = RunConfig::defaults();
  try {
    d.load_file(write_file("cfg_bad", "seed = 1\n\nbogus = 2\n"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  CHECK_THROWS_AS(d.load_file("/nonexistent/splatloc.cfg"), IoError);
}

TEST_CASE("resolved: sorted, complete, and reloadable") {
  RunConfig c = RunConfig::defaults();
  c.set("seed", "4");
  const std::string text = c.resolved();
  CHECK(text.find("seed = 4\n") != std::string::npos);
  CHECK(text.find("bench.extent = 1\n") < text.find("seed = 4\n"));
  CHECK(c.help().size() == static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));

  const auto dir = std::filesystem::temp_directory_path() / "splatloc_test_resolved";
  std::filesystem::remove_all(dir);
  c.write_resolved(dir);
  RunConfig back = RunConfig::defaults();
  back.load_file(dir / "config.resolved");
  CHECK(back.resolved() == text);
}
