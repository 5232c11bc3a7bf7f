#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skyloop/geom.hpp"

namespace skyloop::traj {

using geom::RigidTransform;
using geom::Rotation;
using geom::Vec3;

struct TrajectorySample {
  double timestamp = 0.0;
  RigidTransform pose;  // camera (or body) in world
};

/// Time-ordered pose sequence with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectorySample> samples, std::string frame_id = "world");

  void push_back(const TrajectorySample& s);
  void push_back(double timestamp, const RigidTransform& pose) { push_back({timestamp, pose}); }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TrajectorySample& operator[](std::size_t i) const { return samples_[i]; }
  const TrajectorySample& front() const { return samples_.front(); }
  const TrajectorySample& back() const { return samples_.back(); }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  const std::string& frame_id() const { return frame_id_; }
  void set_frame_id(std::string id) { frame_id_ = std::move(id); }

  double duration() const { return empty() ? 0.0 : back().timestamp - front().timestamp; }
  /// Sum of distances between consecutive positions.
  double path_length() const;
  std::vector<Vec3> positions() const;

  /// Pose at time t: linear position, spherical-linear orientation; clamped
  /// to the end samples outside the covered range.
  RigidTransform interpolate(double t) const;

 private:
  std::vector<TrajectorySample> samples_;
  std::string frame_id_ = "world";
};

/// The drone state xi = [p, q].
struct PoseState {
  Vec3 position = Vec3::Zero();
  Rotation orientation;
};

struct VelocityCommand {
  Vec3 linear = Vec3::Zero();  // m/s, world frame
  double yaw_rate = 0.0;       // rad/s
};

struct StateActionPair {
  double timestamp = 0.0;
  PoseState state;
  VelocityCommand action;
};

struct Tolerances {
  double position = 0.10;  // m
  double yaw = 0.15;       // rad
};

struct Waypoint {
  RigidTransform pose;
  Tolerances tolerance;
};

struct ControllerGains {
  double kp_linear = 1.0;
  double kp_yaw = 1.0;
};

struct ControlLimits {
  double v_max = 1.0;      // m/s
  double omega_max = 1.0;  // rad/s
};

/// One-to-one index pairs (estimate, reference).
using IndexPairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// Greedy nearest-timestamp association: candidate pairs within max_dt are
/// accepted in order of increasing |dt|. Output sorted by estimate index.
/// Throws NoAssociations when nothing pairs up.
IndexPairs associate(const Trajectory& est, const Trajectory& ref, double max_dt);

/// Least-squares similarity (or rigid) transform mapping src onto dst.
geom::SimilarityTransform umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                                  bool with_scale);

struct Alignment {
  geom::SimilarityTransform transform;
  double rmse = 0.0;
  std::size_t pairs = 0;
  bool orientation_aided = false;
};

/// Aligns `estimated` onto `reference` after associating timestamps within
/// half the reference's median sample period.
Alignment align_umeyama(const Trajectory& estimated, const Trajectory& reference, bool with_scale);

/// Rotation from the chordal mean of the paired orientations, then scale and
/// translation by least squares on positions. Defined for collinear paths.
Alignment align_orientation_aided(const Trajectory& estimated, const Trajectory& reference,
                                  bool with_scale);

/// Umeyama, or the orientation-aided fit when either path is nearly straight
/// (second principal spread below 2% of the first).
Alignment align(const Trajectory& estimated, const Trajectory& reference, bool with_scale);

/// Applies a similarity transform to every pose (scale only affects positions).
Trajectory transform(const Trajectory& traj, const geom::SimilarityTransform& s);
Trajectory transform(const Trajectory& traj, const RigidTransform& t);

std::vector<Waypoint> to_waypoints(const Trajectory& traj, double spacing, const Tolerances& tol);

VelocityCommand velocity_command(const PoseState& state, const Waypoint& target,
                                 const ControllerGains& gains, const ControlLimits& limits);

bool waypoint_reached(const PoseState& state, const Waypoint& wp);

Trajectory rescale(const Trajectory& traj, double s);

/// State = pose of each sample; action = finite-difference velocity to the
/// next sample (zero for the last one).
std::vector<StateActionPair> state_action_pairs(const Trajectory& traj);

/// `timestamp tx ty tz qx qy qz qw`, 9 significant digits, '#' comments.
void write_trajectory(std::ostream& os, const Trajectory& traj);
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is);
Trajectory read_trajectory(const std::string& path);

/// CSV: t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,yaw_rate
void write_state_actions(const std::string& path, std::span<const StateActionPair> pairs);

}  // namespace skyloop::traj
