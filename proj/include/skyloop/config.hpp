#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skyloop/mission.hpp"
#include "skyloop/odometry.hpp"
#include "skyloop/simworld.hpp"
#include "skyloop/trajectory.hpp"

namespace skyloop {

/// Every tunable of the command-line tools. Keys are flat and dotted,
/// e.g. "odometry.huber_delta", "sim.dt", "provider.url".
struct Config {
  vo::OdometryConfig odometry;
  sim::SimConfig sim;
  traj::ControllerGains gains;
  mission::Limits limits;
  mission::ExecutorConfig executor;  // filled by sync()
  mission::HttpProviderConfig provider;
  std::string provider_kind = "sim";  // sim | directory | http
  std::string provider_dir;
  double pixel_noise = 0.0;
  std::uint64_t seed = 42;

  /// Recognized keys in declaration order.
  static std::vector<std::string> keys();
  /// Throws ParseError for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Propagates seed, odometry, gains and limits into the nested configs,
  /// then validates. Call after editing fields directly.
  void sync();
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Environment variable for a key: SKYLOOP_<SECTION>_<KEY>, upper case.
std::string env_name(const std::string& key);

/// Defaults, then the JSON file (when `path` is non-empty), then environment
/// overrides. Throws IoFailure or ParseError.
Config load_config(const std::string& path, const EnvLookup& env = process_env);

}  // namespace skyloop
