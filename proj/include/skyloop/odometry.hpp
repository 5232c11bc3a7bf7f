#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "skyloop/features.hpp"
#include "skyloop/frame_sequence.hpp"
#include "skyloop/geom.hpp"
#include "skyloop/trajectory.hpp"

// Monocular feature-based visual odometry: two-view initialization, robust
// pose tracking against a sparse map, triangulation of new points and a
// sliding-window bundle adjustment. No loop closure, no relocalization.
namespace skyloop::vo {

using features::BinaryDescriptor;
using features::Keypoint;
using geom::CameraIntrinsics;
using geom::RigidTransform;
using geom::Vec2;
using geom::Vec3;

struct OdometryConfig {
  double huber_delta = 2.0;         // px
  int ransac_iterations = 200;
  double ransac_threshold = 1.5;    // px, Sampson distance
  double outlier_threshold = 3.0;   // px, reprojection error flagged as outlier
  int lm_max_iterations = 30;
  double lm_epsilon = 1e-10;        // step norm
  int pose_rounds = 3;              // optimize / reclassify cycles
  int min_inliers = 15;
  int min_init_matches = 50;
  double min_init_inlier_ratio = 0.5;
  double min_parallax_deg = 1.0;
  double triangulation_max_error = 2.0;  // px
  double keyframe_ratio = 0.8;
  int keyframe_max_gap = 10;
  int ba_window = 7;
  int ba_iterations = 10;
  int covisibility_threshold = 15;
  int max_lost_frames = 20;
  int init_frame_limit = 60;
  double track_radius = 15.0;       // px
  double refine_radius = 4.0;       // px, second projection pass
  int max_descriptor_distance = 80;
  double match_ratio = 0.9;
  bool oriented_descriptors = false;
  features::DetectorParams detector;
  std::uint64_t seed = 42;

  /// Throws InvalidArgument unless every threshold and count is positive.
  void validate() const;
};

/// Features of one image.
struct Frame {
  double timestamp = 0.0;
  int width = 0;
  int height = 0;
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
};

Frame extract_frame(const GrayImage& img, double timestamp, const OdometryConfig& cfg);

struct Observation {
  int keyframe = 0;
  int keypoint = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct MapPoint {
  int id = 0;
  Vec3 position = Vec3::Zero();
  BinaryDescriptor descriptor;
  std::vector<Observation> observations;
};

struct Keyframe {
  int id = 0;
  double timestamp = 0.0;
  RigidTransform pose;  // world -> camera
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  std::vector<int> point_ids;  // per keypoint, -1 when unassigned
};

class SparseMap {
 public:
  int add_keyframe(const Frame& frame, const RigidTransform& pose);
  int add_point(const Vec3& position, const BinaryDescriptor& descriptor);
  /// Links a keypoint to a point; a keypoint may carry at most one point.
  void add_observation(int point_id, int keyframe_id, int keypoint);
  void remove_observation(int point_id, int keyframe_id);
  void remove_point(int point_id);

  std::vector<Keyframe>& keyframes() { return keyframes_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  Keyframe& keyframe(int id) { return keyframes_.at(static_cast<std::size_t>(id)); }
  const Keyframe& keyframe(int id) const { return keyframes_.at(static_cast<std::size_t>(id)); }

  std::map<int, MapPoint>& points() { return points_; }
  const std::map<int, MapPoint>& points() const { return points_; }
  MapPoint* point(int id);
  const MapPoint* point(int id) const;

  /// Number of live points observed by a keyframe.
  int tracked_points(int keyframe_id) const;
  /// Keyframe pairs (a < b) sharing at least `min_shared` points.
  std::vector<std::pair<int, int>> covisibility_edges(int min_shared) const;
  /// Resets each point's descriptor to the medoid of its observations.
  void update_descriptor(int point_id);

  /// Throws InvalidArgument when an observation dangles or a back-reference
  /// disagrees.
  void check_consistency() const;

 private:
  std::vector<Keyframe> keyframes_;
  std::map<int, MapPoint> points_;
  int next_point_id_ = 0;
};

enum class TrackStatus { Ok, Lost };

struct TrackResult {
  RigidTransform pose;  // world -> camera
  int inliers = 0;
  double mean_error = 0.0;  // px, over inliers
  TrackStatus status = TrackStatus::Lost;
  std::vector<char> outlier;  // per correspondence
  double initial_cost = 0.0;
  double final_cost = 0.0;
  /// Cost after every accepted LM step, per round.
  std::vector<std::vector<double>> cost_history;
};

struct Correspondence {
  Vec3 point = Vec3::Zero();  // world frame
  Vec2 pixel = Vec2::Zero();
};

struct ReprojectionJacobians {
  Vec2 projection = Vec2::Zero();
  /// d pi / d xi for the left perturbation exp(xi) * T, xi = (omega, v).
  Eigen::Matrix<double, 2, 6> d_pose;
  Eigen::Matrix<double, 2, 3> d_point;
};

/// Throws NonPositiveDepth when the point is behind the camera.
ReprojectionJacobians reprojection_jacobians(const RigidTransform& world_to_cam, const Vec3& point,
                                             const CameraIntrinsics& k);

/// Huber-robust Levenberg-Marquardt over the pose twist. Each round runs LM
/// on the current inliers, then reclassifies all correspondences.
TrackResult optimize_pose(const RigidTransform& init, std::span<const Correspondence> corr,
                          const CameraIntrinsics& k, const OdometryConfig& cfg);

struct TriangulationOptions {
  double max_error = 2.0;      // px
  double min_angle_deg = 1.0;
};

/// Linear (DLT) triangulation from two world -> camera poses.
Vec3 triangulate(const RigidTransform& pose_a, const RigidTransform& pose_b, const Vec2& px_a,
                 const Vec2& px_b, const CameraIntrinsics& k,
                 const TriangulationOptions& options = {});

/// Angle in radians between the rays from two camera centres to a point.
double triangulation_angle(const RigidTransform& pose_a, const RigidTransform& pose_b,
                           const Vec3& point);

struct Initialization {
  SparseMap map;           // keyframe 0 = frame_a (identity), 1 = frame_b
  RigidTransform pose_b;   // world -> camera of frame_b
  int inliers = 0;
  double median_parallax_deg = 0.0;
};

/// Two-view initialization from brute-force descriptor matches.
Initialization initialize(const Frame& frame_a, const Frame& frame_b, const CameraIntrinsics& k,
                          const OdometryConfig& cfg);
/// Same, with caller-supplied matches (index_a, index_b).
Initialization initialize(const Frame& frame_a, const Frame& frame_b,
                          std::span<const std::pair<int, int>> matches, const CameraIntrinsics& k,
                          const OdometryConfig& cfg);

struct BundleAdjustReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> cost_history;  // after every accepted step
  int iterations = 0;
  int culled_observations = 0;
  int removed_points = 0;
  double mean_error = 0.0;  // px, over surviving observations
};

struct BundleAdjustOptions {
  /// Drop observations above the outlier threshold and points left with
  /// fewer than two observations.
  bool cull = true;
};

/// Joint LM over the poses of `window` and every point they observe.
/// Keyframe 0 and keyframes outside the window stay fixed.
BundleAdjustReport local_bundle_adjust(SparseMap& map, std::span<const int> window,
                                       const CameraIntrinsics& k, const OdometryConfig& cfg,
                                       const BundleAdjustOptions& options = {});

bool should_insert_keyframe(double tracked_ratio, int frames_since_keyframe,
                            const OdometryConfig& cfg);
/// Ratio of the track's inliers to the points tracked by the reference keyframe.
bool should_insert_keyframe(const TrackResult& track, const SparseMap& map, int reference_keyframe,
                            int frames_since_keyframe, const OdometryConfig& cfg);

struct OdometryResult {
  traj::Trajectory trajectory;  // camera in world, one sample per tracked frame
  std::vector<traj::StateActionPair> state_actions;
  bool partial = false;
  int reference_frame = 0;  // frame whose camera defines the world frame
  int initialized_at = -1;  // frame index of the second initialization view
  std::size_t keyframes = 0;
  std::size_t map_points = 0;
};

/// Throws InvalidArgument for fewer than two frames and InitializationFailed
/// when no pair initializes within the first `init_frame_limit` frames.
OdometryResult run(const FrameSequence& video, const CameraIntrinsics& k, const OdometryConfig& cfg);

}  // namespace skyloop::vo
