#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "skyloop/config.hpp"

using namespace skyloop;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("defaults") {
  const Config c = load_config("", fake_env({}));
  CHECK(c.seed == 42);
  CHECK(c.odometry.huber_delta == 2.0);
  CHECK(c.odometry.detector.max_keypoints == 1000);
  CHECK(c.sim.v_max == 1.0);
  CHECK(c.limits.generation_timeout == 90.0);
  CHECK(c.limits.subtask_timeout == 120.0);
  CHECK(c.executor.waypoint_spacing == 0.5);
  CHECK(c.executor.control.v_max == 1.0);
  CHECK(c.provider.url == "http://127.0.0.1:8080");
  CHECK(c.provider_kind == "sim");
}

TEST_CASE("keys round trip through get and set") {
  Config c;
  const auto keys = Config::keys();
  CHECK(keys.size() > 40);
  for (const auto& k : keys) {
    const std::string v = c.get(k);
    CHECK_NOTHROW(c.set(k, v));
    CHECK(c.get(k) == v);
  }
  CHECK_THROWS_AS(c.set("odometry.nope", "1"), Error);
  CHECK_THROWS_AS(c.set("sim.dt", "fast"), Error);
  CHECK_THROWS_AS(c.set("odometry.subpixel", "maybe"), Error);
  c.set("odometry.subpixel", "false");
  CHECK_FALSE(c.odometry.detector.subpixel);
}

TEST_CASE("file then environment precedence") {
  const std::string path = write_temp("skyloop_cfg.json", R"({
    "seed": 7,
    "odometry": {"huber_delta": 3.5, "ransac_iterations": 50},
    "sim.dt": 0.01,
    "provider": {"url": "http://file:1"},
    "mission": {"generation_timeout": 5}
  })");
  const Config f = load_config(path, fake_env({}));
  CHECK(f.seed == 7);
  CHECK(f.odometry.seed == 7);
  CHECK(f.odometry.huber_delta == 3.5);
  CHECK(f.executor.odometry.huber_delta == 3.5);
  CHECK(f.odometry.ransac_iterations == 50);
  CHECK(f.sim.dt == 0.01);
  CHECK(f.provider.url == "http://file:1");
  CHECK(f.limits.generation_timeout == 5.0);

  const Config e = load_config(path, fake_env({{"SKYLOOP_PROVIDER_URL", "http://env:2"},
                                               {"SKYLOOP_ODOMETRY_HUBER_DELTA", "1.25"},
                                               {"SKYLOOP_SEED", "9"}}));
  CHECK(e.provider.url == "http://env:2");
  CHECK(e.odometry.huber_delta == 1.25);
  CHECK(e.seed == 9);
  CHECK(e.sim.dt == 0.01);
  std::filesystem::remove(path);

  CHECK(env_name("provider.url") == "SKYLOOP_PROVIDER_URL");
  CHECK(env_name("odometry.fast_threshold") == "SKYLOOP_ODOMETRY_FAST_THRESHOLD");
}

TEST_CASE("bad config files") {
  CHECK_THROWS_AS(load_config("/nonexistent/skyloop.json", fake_env({})), Error);
  const std::string bad = write_temp("skyloop_bad.json", "{\"sim\": {\"dt\": \"x\"}}");
  try {
    load_config(bad, fake_env({}));
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
  const std::string unknown = write_temp("skyloop_unknown.json", "{\"sim\": {\"warp\": 9}}");
  CHECK_THROWS_AS(load_config(unknown, fake_env({})), Error);
  const std::string invalid = write_temp("skyloop_invalid.json", "{\"sim\": {\"dt\": -1}}");
  try {
    load_config(invalid, fake_env({}));
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  CHECK_THROWS_AS(load_config("", fake_env({{"SKYLOOP_SIM_FPS", "abc"}})), Error);
  for (const auto& p : {bad, unknown, invalid}) std::filesystem::remove(p);
}
