#include "skyloop/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

#include "json.hpp"

namespace skyloop {

namespace {

using nlohmann::json;
using Slot = std::variant<double*, int*, bool*, std::string*, std::uint64_t*>;

struct Field {
  const char* key;
  Slot slot;
};

std::vector<Field> fields(Config& c) {
  auto& o = c.odometry;
  auto& d = c.odometry.detector;
  auto& s = c.sim;
  auto& e = c.executor;
  return {
      {"seed", &c.seed},
      {"odometry.huber_delta", &o.huber_delta},
      {"odometry.ransac_iterations", &o.ransac_iterations},
      {"odometry.ransac_threshold", &o.ransac_threshold},
      {"odometry.outlier_threshold", &o.outlier_threshold},
      {"odometry.lm_max_iterations", &o.lm_max_iterations},
      {"odometry.lm_epsilon", &o.lm_epsilon},
      {"odometry.pose_rounds", &o.pose_rounds},
      {"odometry.min_inliers", &o.min_inliers},
      {"odometry.min_init_matches", &o.min_init_matches},
      {"odometry.min_init_inlier_ratio", &o.min_init_inlier_ratio},
      {"odometry.min_parallax_deg", &o.min_parallax_deg},
      {"odometry.triangulation_max_error", &o.triangulation_max_error},
      {"odometry.keyframe_ratio", &o.keyframe_ratio},
      {"odometry.keyframe_max_gap", &o.keyframe_max_gap},
      {"odometry.ba_window", &o.ba_window},
      {"odometry.ba_iterations", &o.ba_iterations},
      {"odometry.covisibility_threshold", &o.covisibility_threshold},
      {"odometry.max_lost_frames", &o.max_lost_frames},
      {"odometry.init_frame_limit", &o.init_frame_limit},
      {"odometry.track_radius", &o.track_radius},
      {"odometry.refine_radius", &o.refine_radius},
      {"odometry.max_descriptor_distance", &o.max_descriptor_distance},
      {"odometry.match_ratio", &o.match_ratio},
      {"odometry.oriented_descriptors", &o.oriented_descriptors},
      {"odometry.fast_threshold", &d.threshold},
      {"odometry.grid_cols", &d.grid_cols},
      {"odometry.grid_rows", &d.grid_rows},
      {"odometry.max_per_cell", &d.max_per_cell},
      {"odometry.max_keypoints", &d.max_keypoints},
      {"odometry.subpixel", &d.subpixel},
      {"sim.dt", &s.dt},
      {"sim.v_max", &s.v_max},
      {"sim.omega_max", &s.omega_max},
      {"sim.tau", &s.tau},
      {"sim.battery_drain", &s.battery_drain},
      {"sim.fps", &s.fps},
      {"sim.ground_z", &s.ground_z},
      {"sim.width", &s.intrinsics.width},
      {"sim.height", &s.intrinsics.height},
      {"sim.fx", &s.intrinsics.fx},
      {"sim.fy", &s.intrinsics.fy},
      {"sim.cx", &s.intrinsics.cx},
      {"sim.cy", &s.intrinsics.cy},
      {"sim.pixel_noise", &c.pixel_noise},
      {"controller.kp_linear", &c.gains.kp_linear},
      {"controller.kp_yaw", &c.gains.kp_yaw},
      {"controller.waypoint_spacing", &e.waypoint_spacing},
      {"controller.land_speed", &e.land_speed},
      {"mission.subtask_timeout", &c.limits.subtask_timeout},
      {"mission.generation_timeout", &c.limits.generation_timeout},
      {"mission.battery_floor", &c.limits.battery_floor},
      {"provider.kind", &c.provider_kind},
      {"provider.dir", &c.provider_dir},
      {"provider.url", &c.provider.url},
      {"provider.poll_interval", &c.provider.poll_interval},
      {"provider.request_timeout", &c.provider.request_timeout},
  };
}

Field* find(std::vector<Field>& fs, const std::string& key) {
  for (auto& f : fs) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::ParseError, key + ": not a number: " + v);
  return out;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else if (it->is_string()) {
      out.emplace_back(key, it->get<std::string>());
    } else if (it->is_boolean() || it->is_number()) {
      out.emplace_back(key, it->dump());
    } else {
      throw Error(ErrorCode::ParseError, key + ": unsupported value");
    }
  }
}

}  // namespace

std::vector<std::string> Config::keys() {
  Config c;
  std::vector<std::string> out;
  for (const auto& f : fields(c)) out.emplace_back(f.key);
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  auto fs = fields(*this);
  Field* f = find(fs, key);
  if (f == nullptr) throw Error(ErrorCode::ParseError, "unknown config key " + key);
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") {
            *p = true;
          } else if (value == "false" || value == "0") {
            *p = false;
          } else {
            throw Error(ErrorCode::ParseError, key + ": not a boolean: " + value);
          }
        } else {
          *p = parse_number<T>(key, value);
        }
      },
      f->slot);
}

std::string Config::get(const std::string& key) const {
  auto fs = fields(const_cast<Config&>(*this));
  Field* f = find(fs, key);
  if (f == nullptr) throw Error(ErrorCode::ParseError, "unknown config key " + key);
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else {
          return json(*p).dump();
        }
      },
      f->slot);
}

void Config::sync() {
  odometry.seed = seed;
  executor.odometry = odometry;
  executor.gains = gains;
  executor.control = {sim.v_max, sim.omega_max};
  if (!(pixel_noise >= 0.0)) throw Error(ErrorCode::InvalidArgument, "pixel noise must be non-negative");
  odometry.validate();
  sim.validate();
  limits.validate();
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

std::string env_name(const std::string& key) {
  std::string out = "SKYLOOP_";
  for (char ch : key) {
    out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return out;
}

Config load_config(const std::string& path, const EnvLookup& env) {
  Config c;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    try {
      const json j = json::parse(is);
      if (!j.is_object()) throw Error(ErrorCode::ParseError, path + ": expected an object");
      flatten(j, "", entries);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    for (const auto& [k, v] : entries) c.set(k, v);
  }
  for (const auto& key : Config::keys()) {
    if (auto v = env(env_name(key))) c.set(key, *v);
  }
  c.sync();
  return c;
}

}  // namespace skyloop
