#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skyloop/frame_sequence.hpp"
#include "skyloop/geom.hpp"
#include "skyloop/image.hpp"
#include "skyloop/trajectory.hpp"

// Synthetic world: renders frame sequences from known camera poses and
// integrates a kinematic quadrotor under velocity commands.
namespace skyloop::sim {

using geom::CameraIntrinsics;
using geom::RigidTransform;
using geom::Rotation;
using geom::Vec3;

struct Landmark {
  Vec3 position = Vec3::Zero();
  double radius_px = 1.5;     // Gaussian sigma of the sprite, pixels
  double brightness = 80.0;   // signed offset from the background
};

/// Checkerboard on a plane, sampled per pixel by ray casting.
struct CheckerPlane {
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double cell_size = 0.5;  // m
  double extent = 10.0;    // side length, m
  double contrast = 20.0;  // +/- intensity around the background
};

struct Scene {
  std::vector<Landmark> landmarks;
  std::vector<CheckerPlane> planes;
  Vec3 bounds_min = Vec3::Constant(-10.0);
  Vec3 bounds_max = Vec3::Constant(10.0);
  double background = 128.0;
  std::uint64_t seed = 0;
};

/// Box-shaped room with landmarks scattered over its six faces.
struct RoomSpec {
  Vec3 min = Vec3(-2.0, -4.0, 0.0);
  Vec3 max = Vec3(8.0, 4.0, 4.0);
  int landmarks = 3000;
  double jitter = 0.3;  // inward offset range off the face, m
  double min_radius_px = 1.2;
  double max_radius_px = 2.0;
  double min_brightness = 50.0;
  double max_brightness = 110.0;
  std::uint64_t seed = 7;
};

Scene make_room_scene(const RoomSpec& spec);

/// Scene file: {"room": {...RoomSpec fields}} builds a room; otherwise
/// explicit "landmarks", "planes", "bounds" {"min", "max"}, "seed".
/// Throws ParseError.
Scene scene_from_json(const std::string& text);
std::string scene_to_json(const Scene& scene);
Scene read_scene(const std::string& path);
void write_scene(const std::string& path, const Scene& scene);

/// Throws InvalidArgument if a renderable scene has fewer than 100 landmarks
/// inside its bounds.
void validate_scene(const Scene& scene);

struct RenderOptions {
  /// Standard deviation of Gaussian jitter added to every projected sprite
  /// centre, pixels.
  double pixel_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Renders the scene seen from `camera_in_world` (camera frame: x right,
/// y down, z forward).
GrayImage render(const Scene& scene, const RigidTransform& camera_in_world,
                 const CameraIntrinsics& k, const RenderOptions& options = {});

/// Samples gt at `fps` from its first timestamp (frame count floor(duration *
/// fps) + 1) and renders each frame. Returns the frames and the exact
/// per-frame poses, re-timed to start at 0.
std::pair<FrameSequence, traj::Trajectory> generate_video(const Scene& scene,
                                                          const traj::Trajectory& gt,
                                                          const CameraIntrinsics& k, double fps,
                                                          const RenderOptions& options = {});

struct DroneState {
  Vec3 position = Vec3::Zero();
  Rotation orientation;  // body in world; body x forward, z up
  Vec3 velocity = Vec3::Zero();
  double battery = 1.0;

  traj::PoseState pose() const { return {position, orientation}; }
};

struct SimConfig {
  double dt = 0.02;
  double v_max = 1.0;
  double omega_max = 1.0;
  double tau = 0.2;             // first-order velocity response, s
  double battery_drain = 0.002; // fraction per second
  double fps = 30.0;
  double ground_z = 0.0;
  CameraIntrinsics intrinsics;
  /// Camera pose in the body frame: camera +z along body +x.
  RigidTransform mount = forward_mount();

  static RigidTransform forward_mount();
  void validate() const;
};

DroneState step(const DroneState& state, const traj::VelocityCommand& cmd, const SimConfig& cfg);

RigidTransform camera_pose(const DroneState& state, const SimConfig& cfg);
RigidTransform camera_pose(const RigidTransform& body_in_world, const SimConfig& cfg);
RigidTransform body_pose(const RigidTransform& camera_in_world, const SimConfig& cfg);

GrayImage observe(const DroneState& state, const Scene& scene, const SimConfig& cfg);

}  // namespace skyloop::sim
