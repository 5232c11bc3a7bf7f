#include "skyloop/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "skyloop/rng.hpp"

namespace skyloop::sim {

Scene make_room_scene(const RoomSpec& spec) {
  const Vec3 size = spec.max - spec.min;
  if ((size.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "room must have volume");
  // Faces: -x, +x, -y, +y, -z, +z; landmark share proportional to area.
  const double areas[6] = {size.y() * size.z(), size.y() * size.z(), size.x() * size.z(),
                           size.x() * size.z(), size.x() * size.y(), size.x() * size.y()};
  double total = 0.0;
  for (double a : areas) total += a;

  Scene scene;
  scene.seed = spec.seed;
  scene.bounds_min = spec.min;
  scene.bounds_max = spec.max;
  Rng rng(spec.seed);
  scene.landmarks.reserve(static_cast<std::size_t>(spec.landmarks));
  for (int n = 0; n < spec.landmarks; ++n) {
    double pick = rng.uniform() * total;
    int face = 0;
    while (face < 5 && pick >= areas[face]) pick -= areas[face++];
    const int axis = face / 2;
    const bool high = face % 2 == 1;
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = rng.uniform(spec.min[a], spec.max[a]);
    const double inset = rng.uniform(0.0, spec.jitter);
    p[axis] = high ? spec.max[axis] - inset : spec.min[axis] + inset;
    Landmark lm;
    lm.position = p;
    lm.radius_px = rng.uniform(spec.min_radius_px, spec.max_radius_px);
    const double mag = rng.uniform(spec.min_brightness, spec.max_brightness);
    lm.brightness = rng.uniform() < 0.5 ? mag : -mag;
    scene.landmarks.push_back(lm);
  }
  return scene;
}

void validate_scene(const Scene& scene) {
  std::size_t inside = 0;
  for (const auto& lm : scene.landmarks) {
    if ((lm.position.array() >= scene.bounds_min.array()).all() &&
        (lm.position.array() <= scene.bounds_max.array()).all()) {
      ++inside;
    }
  }
  if (inside < 100) {
    throw Error(ErrorCode::InvalidArgument, "scene needs at least 100 landmarks within bounds");
  }
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void render_plane(const CheckerPlane& plane, const RigidTransform& cam_in_world,
                  const CameraIntrinsics& k, std::vector<double>& buf) {
  const Vec3 n = plane.normal.normalized();
  // In-plane axes: any unit vector orthogonal to n, then n x u.
  Vec3 u = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  u = (u - n * n.dot(u)).normalized();
  const Vec3 v = n.cross(u);
  const geom::Mat3 r = cam_in_world.rotation.matrix();
  const Vec3& c = cam_in_world.translation;
  const double half = 0.5 * plane.extent;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 d = r * geom::unproject(k, {static_cast<double>(x), static_cast<double>(y)});
      const double denom = n.dot(d);
      if (std::abs(denom) < 1e-12) continue;
      const double lambda = n.dot(plane.origin - c) / denom;
      if (lambda <= 0.0) continue;
      const Vec3 rel = c + lambda * d - plane.origin;
      const double a = rel.dot(u);
      const double b = rel.dot(v);
      if (std::abs(a) > half || std::abs(b) > half) continue;
      const long ia = static_cast<long>(std::floor(a / plane.cell_size));
      const long ib = static_cast<long>(std::floor(b / plane.cell_size));
      buf[static_cast<std::size_t>(y) * k.width + x] += ((ia + ib) & 1) ? plane.contrast : -plane.contrast;
    }
  }
}

}  // namespace

GrayImage render(const Scene& scene, const RigidTransform& camera_in_world,
                 const CameraIntrinsics& k, const RenderOptions& options) {
  k.validate();
  std::vector<double> buf(static_cast<std::size_t>(k.width) * k.height, scene.background);
  for (const auto& plane : scene.planes) render_plane(plane, camera_in_world, k, buf);

  const RigidTransform world_to_cam = geom::invert(camera_in_world);
  Rng noise(options.noise_seed);
  for (const auto& lm : scene.landmarks) {
    // Draw noise for every landmark so the sequence is independent of culling.
    const double jx = options.pixel_noise > 0.0 ? noise.normal(0.0, options.pixel_noise) : 0.0;
    const double jy = options.pixel_noise > 0.0 ? noise.normal(0.0, options.pixel_noise) : 0.0;
    const Vec3 pc = geom::apply(world_to_cam, lm.position);
    if (pc.z() <= 0.05) continue;
    const geom::Vec2 px = geom::project(k, pc) + geom::Vec2(jx, jy);
    const double sigma = lm.radius_px;
    const int reach = static_cast<int>(std::ceil(4.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(std::floor(px.x())) - reach);
    const int x1 = std::min(k.width - 1, static_cast<int>(std::ceil(px.x())) + reach);
    const int y0 = std::max(0, static_cast<int>(std::floor(px.y())) - reach);
    const int y1 = std::min(k.height - 1, static_cast<int>(std::ceil(px.y())) + reach);
    if (x0 > x1 || y0 > y1) continue;
    const double inv = -0.5 / (sigma * sigma);
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - px.y();
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - px.x();
        buf[static_cast<std::size_t>(y) * k.width + x] += lm.brightness * std::exp((dx * dx + dy * dy) * inv);
      }
    }
  }

  GrayImage img(k.width, k.height);
  auto& px = img.pixels();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(buf[i], 0.0, 255.0)));
  }
  return img;
}

std::pair<FrameSequence, traj::Trajectory> generate_video(const Scene& scene,
                                                          const traj::Trajectory& gt,
                                                          const CameraIntrinsics& k, double fps,
                                                          const RenderOptions& options) {
  if (!(fps > 0.0)) throw Error(ErrorCode::InvalidArgument, "fps must be positive");
  if (gt.empty() || gt.duration() + 1e-12 < 2.0 / fps) {
    throw Error(ErrorCode::InvalidArgument, "ground-truth trajectory must span at least 2 frames");
  }
  const auto count = static_cast<std::size_t>(std::floor(gt.duration() * fps + 1e-9)) + 1;
  FrameSequence seq;
  seq.fps = fps;
  seq.intrinsics = k;
  traj::Trajectory frames_gt;
  const double t0 = gt.front().timestamp;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / fps;
    const RigidTransform pose = gt.interpolate(t0 + t);
    RenderOptions opt = options;
    opt.noise_seed = mix(options.noise_seed, i);
    seq.frames.push_back(render(scene, pose, k, opt));
    frames_gt.push_back(t, pose);
  }
  return {std::move(seq), std::move(frames_gt)};
}

RigidTransform SimConfig::forward_mount() {
  geom::Mat3 r;
  // Columns: camera x, y, z axes expressed in the body frame.
  r << 0.0, 0.0, 1.0,  //
      -1.0, 0.0, 0.0,  //
      0.0, -1.0, 0.0;
  return {Rotation::from_matrix(r), Vec3::Zero()};
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !(tau >= 0.0) || !(fps > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "sim config needs dt > 0, tau >= 0, fps > 0");
  }
  if (!(v_max > 0.0 && omega_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "velocity limits must be positive");
  }
  intrinsics.validate();
}

DroneState step(const DroneState& state, const traj::VelocityCommand& cmd, const SimConfig& cfg) {
  DroneState next = state;
  Vec3 target = cmd.linear;
  const double n = target.norm();
  if (n > cfg.v_max) target *= cfg.v_max / n;
  const double yaw_rate = std::clamp(cmd.yaw_rate, -cfg.omega_max, cfg.omega_max);
  if (cfg.tau <= 0.0) {
    next.velocity = target;
  } else {
    const double alpha = std::min(1.0, cfg.dt / cfg.tau);
    next.velocity = state.velocity + alpha * (target - state.velocity);
  }
  next.position = state.position + next.velocity * cfg.dt;
  if (next.position.z() < cfg.ground_z) {
    next.position.z() = cfg.ground_z;
    next.velocity.z() = std::max(0.0, next.velocity.z());
  }
  next.orientation = Rotation::about_z(yaw_rate * cfg.dt) * state.orientation;
  next.battery = std::max(0.0, state.battery - cfg.battery_drain * cfg.dt);
  return next;
}

RigidTransform camera_pose(const RigidTransform& body_in_world, const SimConfig& cfg) {
  return geom::compose(body_in_world, cfg.mount);
}

RigidTransform camera_pose(const DroneState& state, const SimConfig& cfg) {
  return camera_pose(RigidTransform{state.orientation, state.position}, cfg);
}

RigidTransform body_pose(const RigidTransform& camera_in_world, const SimConfig& cfg) {
  return geom::compose(camera_in_world, geom::invert(cfg.mount));
}

GrayImage observe(const DroneState& state, const Scene& scene, const SimConfig& cfg) {
  return render(scene, camera_pose(state, cfg), cfg.intrinsics);
}

}  // namespace skyloop::sim

namespace skyloop::sim {

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

Scene scene_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.contains("room")) {
      const json& r = j["room"];
      RoomSpec spec;
      if (r.contains("min")) spec.min = vec3_from(r["min"]);
      if (r.contains("max")) spec.max = vec3_from(r["max"]);
      spec.landmarks = r.value("landmarks", spec.landmarks);
      spec.jitter = r.value("jitter", spec.jitter);
      spec.min_radius_px = r.value("min_radius_px", spec.min_radius_px);
      spec.max_radius_px = r.value("max_radius_px", spec.max_radius_px);
      spec.min_brightness = r.value("min_brightness", spec.min_brightness);
      spec.max_brightness = r.value("max_brightness", spec.max_brightness);
      spec.seed = r.value("seed", j.value("seed", spec.seed));
      Scene scene = make_room_scene(spec);
      scene.background = j.value("background", scene.background);
      return scene;
    }
    Scene scene;
    scene.seed = j.value("seed", scene.seed);
    scene.background = j.value("background", scene.background);
    if (j.contains("bounds")) {
      scene.bounds_min = vec3_from(j["bounds"].at("min"));
      scene.bounds_max = vec3_from(j["bounds"].at("max"));
    }
    for (const json& l : j.value("landmarks", json::array())) {
      Landmark lm;
      lm.position = vec3_from(l.at("position"));
      lm.radius_px = l.value("radius_px", lm.radius_px);
      lm.brightness = l.value("brightness", lm.brightness);
      scene.landmarks.push_back(lm);
    }
    for (const json& p : j.value("planes", json::array())) {
      CheckerPlane plane;
      plane.origin = vec3_from(p.at("origin"));
      plane.normal = vec3_from(p.at("normal")).normalized();
      plane.cell_size = p.value("cell_size", plane.cell_size);
      plane.extent = p.value("extent", plane.extent);
      plane.contrast = p.value("contrast", plane.contrast);
      scene.planes.push_back(plane);
    }
    return scene;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scene: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, std::string("scene: ") + e.what());
  }
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["seed"] = scene.seed;
  j["background"] = scene.background;
  j["bounds"] = {{"min", vec3_to(scene.bounds_min)}, {"max", vec3_to(scene.bounds_max)}};
  json lms = json::array();
  for (const auto& lm : scene.landmarks) {
    lms.push_back({{"position", vec3_to(lm.position)},
                   {"radius_px", lm.radius_px},
                   {"brightness", lm.brightness}});
  }
  j["landmarks"] = std::move(lms);
  json planes = json::array();
  for (const auto& p : scene.planes) {
    planes.push_back({{"origin", vec3_to(p.origin)},
                      {"normal", vec3_to(p.normal)},
                      {"cell_size", p.cell_size},
                      {"extent", p.extent},
                      {"contrast", p.contrast}});
  }
  j["planes"] = std::move(planes);
  return j.dump(1);
}

Scene read_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return scene_from_json(ss.str());
}

void write_scene(const std::string& path, const Scene& scene) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  os << scene_to_json(scene) << '\n';
}

}  // namespace skyloop::sim
