#pragma once

#include <utility>

#include "skyloop/frame_sequence.hpp"
#include "skyloop/simworld.hpp"
#include "skyloop/trajectory.hpp"

namespace testutil {

// Camera-in-world path for a drone at `start` whose body follows
// start * (rotation about z by yaw_rate*t, translation velocity*t in body frame).
inline skyloop::traj::Trajectory body_camera_path(const skyloop::sim::SimConfig& cfg,
                                                  const skyloop::geom::RigidTransform& start,
                                                  const skyloop::geom::Vec3& velocity,
                                                  double yaw_rate, double duration,
                                                  double rate = 120.0) {
  using namespace skyloop;
  traj::Trajectory out;
  const int n = static_cast<int>(duration * rate + 0.5);
  for (int i = 0; i <= n; ++i) {
    const double t = i / rate;
    geom::RigidTransform rel;
    if (yaw_rate == 0.0) {
      rel = {geom::Rotation::identity(), velocity * t};
    } else {
      // Constant body-frame twist integrated in closed form.
      geom::Vec6 xi;
      xi << 0, 0, yaw_rate * t, velocity * t;
      rel = geom::se3_exp(xi);
    }
    out.push_back(t, sim::camera_pose(geom::compose(start, rel), cfg));
  }
  return out;
}

inline const skyloop::sim::Scene& room() {
  static const skyloop::sim::Scene scene = skyloop::sim::make_room_scene({});
  return scene;
}

inline skyloop::geom::RigidTransform room_start() {
  return {skyloop::geom::Rotation::identity(), skyloop::geom::Vec3(0.0, 0.0, 1.5)};
}

inline std::pair<skyloop::FrameSequence, skyloop::traj::Trajectory> render_clip(
    const skyloop::traj::Trajectory& path, double fps = 30.0, double noise = 0.0,
    std::uint64_t seed = 1) {
  skyloop::sim::SimConfig cfg;
  skyloop::sim::RenderOptions opt;
  opt.pixel_noise = noise;
  opt.noise_seed = seed;
  return skyloop::sim::generate_video(room(), path, cfg.intrinsics, fps, opt);
}

}  // namespace testutil
