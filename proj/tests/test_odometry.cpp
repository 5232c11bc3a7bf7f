#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "scenes.hpp"
#include "skyloop/odometry.hpp"

using namespace skyloop;
using namespace skyloop::vo;
using namespace testutil;
using geom::Vec6;

namespace {

std::vector<Correspondence> synthetic_correspondences(Rng& rng, const RigidTransform& pose,
                                                      const CameraIntrinsics& k, int n) {
  std::vector<Correspondence> out;
  const RigidTransform cam_to_world = geom::invert(pose);
  while (static_cast<int>(out.size()) < n) {
    const Vec3 pc(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(3, 8));
    const Vec2 px = geom::project(k, pc);
    if (!k.contains(px)) continue;
    out.push_back({geom::apply(cam_to_world, pc), px});
  }
  return out;
}

double rotation_angle(const RigidTransform& a, const RigidTransform& b) {
  return (a.rotation.inverse() * b.rotation).angle();
}

Frame frame_from_projections(const RigidTransform& pose, std::span<const Vec3> points,
                             const CameraIntrinsics& k, double t) {
  Frame f;
  f.timestamp = t;
  f.width = k.width;
  f.height = k.height;
  for (const auto& p : points) {
    const Vec2 px = geom::project(k, geom::apply(pose, p));
    f.keypoints.push_back(Keypoint{px.x(), px.y()});
    f.descriptors.emplace_back();
  }
  return f;
}

}  // namespace

TEST_CASE("config validation") {
  OdometryConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.huber_delta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.ransac_iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("reprojection jacobians match central differences") {
  Rng rng(21);
  CameraIntrinsics k;
  double worst = 0.0;
  int done = 0;
  while (done < 1000) {
    const RigidTransform t = random_pose(rng, 1.0, 1.0);
    const Vec3 pc(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 6));
    const Vec3 pw = geom::apply(geom::invert(t), pc);
    const auto j = reprojection_jacobians(t, pw, k);
    const double h = 1e-6;
    Eigen::Matrix<double, 2, 6> fd_pose;
    for (int i = 0; i < 6; ++i) {
      Vec6 d = Vec6::Zero();
      d[i] = h;
      const Vec2 a = geom::project(k, geom::apply(geom::compose(geom::se3_exp(d), t), pw));
      const Vec2 b = geom::project(k, geom::apply(geom::compose(geom::se3_exp(-d), t), pw));
      fd_pose.col(i) = (a - b) / (2 * h);
    }
    Eigen::Matrix<double, 2, 3> fd_point;
    for (int i = 0; i < 3; ++i) {
      Vec3 d = Vec3::Zero();
      d[i] = h;
      const Vec2 a = geom::project(k, geom::apply(t, pw + d));
      const Vec2 b = geom::project(k, geom::apply(t, pw - d));
      fd_point.col(i) = (a - b) / (2 * h);
    }
    const double ep = (j.d_pose - fd_pose).cwiseAbs().maxCoeff() / std::max(1.0, fd_pose.cwiseAbs().maxCoeff());
    const double eq = (j.d_point - fd_point).cwiseAbs().maxCoeff() / std::max(1.0, fd_point.cwiseAbs().maxCoeff());
    worst = std::max({worst, ep, eq});
    CHECK((j.projection - geom::project(k, pc)).norm() < 1e-9);
    ++done;
  }
  CHECK(worst < 1e-5);
  CHECK_THROWS_AS(reprojection_jacobians(RigidTransform::identity(), Vec3(0, 0, -1), k), Error);
}

TEST_CASE("optimize_pose examples") {
  Rng rng(22);
  CameraIntrinsics k;
  OdometryConfig cfg;
  const RigidTransform gt = random_pose(rng, 0.3, 0.5);
  auto corr = synthetic_correspondences(rng, gt, k, 30);

  const auto at_gt = optimize_pose(gt, corr, k, cfg);
  CHECK(at_gt.final_cost < 1e-18);
  CHECK(geom::max_abs_difference(at_gt.pose, gt) < 1e-10);
  CHECK(at_gt.status == TrackStatus::Ok);

  Vec6 d;
  d << 0.05 / std::sqrt(3.0), 0.05 / std::sqrt(3.0), 0.05 / std::sqrt(3.0), 0.1, 0, 0;
  const RigidTransform init = geom::compose(geom::se3_exp(d), gt);
  const auto r = optimize_pose(init, corr, k, cfg);
  CHECK((r.pose.translation - gt.translation).norm() < 1e-6);
  CHECK(rotation_angle(r.pose, gt) < 1e-6);
  CHECK(r.final_cost <= r.initial_cost);
  for (const auto& round : r.cost_history) {
    for (std::size_t i = 1; i < round.size(); ++i) CHECK(round[i] <= round[i - 1]);
  }

  auto noisy = corr;
  for (int i = 0; i < 10; ++i) {
    auto c = synthetic_correspondences(rng, gt, k, 1)[0];
    c.pixel += Vec2(50, 0);
    noisy.push_back(c);
  }
  const auto o = optimize_pose(init, noisy, k, cfg);
  CHECK((o.pose.translation - gt.translation).norm() < 1e-3);
  REQUIRE(o.outlier.size() == 40);
  for (int i = 0; i < 30; ++i) CHECK(o.outlier[i] == 0);
  for (int i = 30; i < 40; ++i) CHECK(o.outlier[i] == 1);
  CHECK(o.inliers == 30);

  try {
    optimize_pose(gt, std::span(corr).first(3), k, cfg);
    FAIL("expected TooFewCorrespondences");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewCorrespondences);
  }
}

TEST_CASE("triangulate examples") {
  CameraIntrinsics k;
  const RigidTransform a;
  // Camera centre at (1,0,0): world -> camera translation is -1.
  const RigidTransform b = RigidTransform::translate(-1, 0, 0);
  const Vec3 p(0, 0, 5);
  const Vec2 pa = geom::project(k, geom::apply(a, p));
  const Vec2 pb = geom::project(k, geom::apply(b, p));
  CHECK((triangulate(a, b, pa, pb, k) - p).norm() < 1e-9);
  CHECK(triangulation_angle(a, b, p) == doctest::Approx(std::atan2(1.0, 5.0)));
  try {
    triangulate(a, b, pa, pb + Vec2(0, 20), k);
    FAIL("expected HighReprojectionError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HighReprojectionError);
  }
  try {
    triangulate(a, a, pa, pa, k);
    FAIL("expected LowParallax");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LowParallax);
  }
  try {
    // Rays diverge: the intersection lies behind both cameras.
    triangulate(a, b, Vec2(300, 240), Vec2(340, 240), k);
    FAIL("expected CheiralityFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CheiralityFailure);
  }
}

TEST_CASE("keyframe policy") {
  OdometryConfig cfg;
  CHECK(should_insert_keyframe(0.5, 1, cfg));
  CHECK_FALSE(should_insert_keyframe(1.0, 3, cfg));
  CHECK(should_insert_keyframe(1.0, 10, cfg));
}

TEST_CASE("sparse map bookkeeping") {
  SparseMap map;
  Frame f;
  f.keypoints.resize(4);
  f.descriptors.resize(4);
  const int k0 = map.add_keyframe(f, RigidTransform::identity());
  const int k1 = map.add_keyframe(f, RigidTransform::translate(1, 0, 0));
  CHECK(k0 == 0);
  CHECK(k1 == 1);
  const int p = map.add_point(Vec3(0, 0, 3), {});
  map.add_observation(p, k0, 2);
  map.add_observation(p, k1, 1);
  CHECK(map.keyframe(0).point_ids[2] == p);
  CHECK(map.tracked_points(0) == 1);
  CHECK(map.covisibility_edges(1) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(map.covisibility_edges(2).empty());
  CHECK_NOTHROW(map.check_consistency());
  const int orphan = map.add_point(Vec3(1, 1, 3), {});
  CHECK_THROWS_AS(map.add_observation(orphan, k0, 2), Error);
  map.remove_point(orphan);
  map.remove_observation(p, k1);
  CHECK(map.keyframe(1).point_ids[1] == -1);
  map.remove_point(p);
  CHECK(map.point(p) == nullptr);
  CHECK(map.keyframe(0).point_ids[2] == -1);
  CHECK_NOTHROW(map.check_consistency());
}

TEST_CASE("local bundle adjustment") {
  Rng rng(23);
  CameraIntrinsics k;
  OdometryConfig cfg;
  std::vector<Vec3> pts;
  for (int i = 0; i < 80; ++i) pts.emplace_back(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(4, 8));
  std::vector<RigidTransform> poses;
  for (int i = 0; i < 5; ++i) {
    poses.push_back(geom::invert(RigidTransform{geom::Rotation::about_z(0.01 * i), Vec3(0.15 * i, 0.02 * i, 0)}));
  }
  auto build = [&](double point_offset, double pixel_noise) {
    SparseMap map;
    Rng noise(24);
    for (int i = 0; i < 5; ++i) {
      Frame f = frame_from_projections(poses[i], pts, k, i);
      for (auto& kp : f.keypoints) {
        kp.x += pixel_noise * noise.normal();
        kp.y += pixel_noise * noise.normal();
      }
      map.add_keyframe(f, poses[i]);
    }
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const Vec3 off = point_offset * Vec3(noise.normal(), noise.normal(), noise.normal()).normalized();
      const int id = map.add_point(pts[j] + off, {});
      for (int i = 0; i < 5; ++i) map.add_observation(id, i, static_cast<int>(j));
    }
    return map;
  };
  const std::vector<int> window{1, 2, 3, 4};

  SparseMap exact = build(0.0, 0.0);
  const auto r0 = local_bundle_adjust(exact, window, k, cfg);
  CHECK(r0.initial_cost < 1e-18);
  for (int i = 0; i < 5; ++i) CHECK(geom::max_abs_difference(exact.keyframe(i).pose, poses[i]) < 1e-10);
  for (const auto& [id, p] : exact.points()) CHECK((p.position - pts[static_cast<std::size_t>(id)]).norm() < 1e-10);

  // Two fixed keyframes pin the gauge including scale.
  SparseMap moved = build(0.01, 0.0);
  BundleAdjustOptions keep;
  keep.cull = false;
  OdometryConfig tight = cfg;
  tight.ba_iterations = 50;
  const auto r1 = local_bundle_adjust(moved, std::vector<int>{2, 3, 4}, k, tight, keep);
  CHECK(r1.final_cost < r1.initial_cost);
  for (std::size_t i = 1; i < r1.cost_history.size(); ++i) CHECK(r1.cost_history[i] <= r1.cost_history[i - 1]);
  double worst = 0.0;
  for (const auto& [id, p] : moved.points()) worst = std::max(worst, (p.position - pts[static_cast<std::size_t>(id)]).norm());
  CHECK(worst < 1e-6);
  CHECK(geom::max_abs_difference(moved.keyframe(0).pose, poses[0]) == 0.0);
  CHECK(geom::max_abs_difference(moved.keyframe(1).pose, poses[1]) == 0.0);

  SparseMap noisy = build(0.0, 0.5);
  const auto r2 = local_bundle_adjust(noisy, window, k, cfg);
  CHECK(r2.mean_error < 0.7);
  CHECK_NOTHROW(noisy.check_consistency());
  for (const auto& [a, b] : noisy.covisibility_edges(cfg.covisibility_threshold)) {
    for (int pid : noisy.keyframe(a).point_ids) {
      if (pid >= 0) CHECK(noisy.point(pid)->observations.size() >= 2);
    }
    (void)b;
  }
}

TEST_CASE("two-view initialization") {
  sim::SimConfig sc;
  OdometryConfig cfg;
  sim::RoomSpec spec;
  spec.min = Vec3(-1.0, -2.5, 0.0);
  spec.max = Vec3(4.0, 2.5, 3.0);
  spec.landmarks = 2000;
  const sim::Scene points = sim::make_room_scene(spec);
  const RigidTransform cam_a = sim::camera_pose(room_start(), sc);
  const RigidTransform cam_b = geom::compose(cam_a, RigidTransform::translate(0.2, 0, 0));
  const Frame fa = extract_frame(sim::render(points, cam_a, sc.intrinsics), 0.0, cfg);
  const Frame fb = extract_frame(sim::render(points, cam_b, sc.intrinsics), 0.1, cfg);
  const Initialization init = initialize(fa, fb, sc.intrinsics, cfg);
  const Vec3 centre = -(init.pose_b.rotation.inverse().rotate(init.pose_b.translation));
  const double dir_err = std::acos(std::clamp(centre.normalized().dot(Vec3::UnitX()), -1.0, 1.0));
  CHECK(dir_err < 2.0 * kPi / 180.0);
  CHECK(init.pose_b.rotation.angle() < 0.5 * kPi / 180.0);
  CHECK(geom::max_abs_difference(init.map.keyframe(0).pose, RigidTransform::identity()) == 0.0);
  std::vector<double> depths;
  for (const auto& [id, p] : init.map.points()) depths.push_back(p.position.z());
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  CHECK(depths[depths.size() / 2] == doctest::Approx(1.0).epsilon(0.02));
  CHECK_NOTHROW(init.map.check_consistency());

  try {
    initialize(fa, fa, sc.intrinsics, cfg);
    FAIL("expected InsufficientParallax");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientParallax);
  }
  const RigidTransform cam_r = geom::compose(cam_a, RigidTransform{geom::Rotation::from_axis_angle(Vec3::UnitY(), 0.05), Vec3::Zero()});
  const Frame fr = extract_frame(sim::render(points, cam_r, sc.intrinsics), 0.1, cfg);
  try {
    initialize(fa, fr, sc.intrinsics, cfg);
    FAIL("expected InsufficientParallax");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientParallax);
  }
  Frame sparse = fa;
  sparse.keypoints.resize(20);
  sparse.descriptors.resize(20);
  try {
    initialize(sparse, fb, sc.intrinsics, cfg);
    FAIL("expected InsufficientMatches");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientMatches);
  }
}

TEST_CASE("run on a straight clip") {
  sim::SimConfig sc;
  const auto path = body_camera_path(sc, room_start(), Vec3(1.0, 0, 0), 0.0, 4.0);
  auto [video, gt] = render_clip(path);
  REQUIRE(video.frames.size() == 121);
  OdometryConfig cfg;
  const auto r = run(video, sc.intrinsics, cfg);
  CHECK_FALSE(r.partial);
  // The reference frame, then every frame from initialization on.
  REQUIRE(r.trajectory.size() > 2);
  CHECK(r.trajectory.front().timestamp == 0.0);
  const std::size_t init = static_cast<std::size_t>(std::lround(r.trajectory[1].timestamp * 30.0));
  CHECK(init < 60);
  CHECK(r.trajectory.size() >= 110);
  CHECK(r.trajectory.size() == 1 + video.frames.size() - init);
  CHECK(r.state_actions.size() == r.trajectory.size());
  const auto& last = r.state_actions.back().action;
  CHECK(last.linear.norm() == 0.0);
  CHECK(last.yaw_rate == 0.0);

  const auto al = traj::align(r.trajectory, gt, true);
  const auto aligned = traj::transform(r.trajectory, al.transform);
  // Camera x of the forward mount is world -y; progress is along world +x.
  for (std::size_t i = 1; i < aligned.size(); ++i) {
    CHECK(aligned[i].pose.translation.x() > aligned[i - 1].pose.translation.x() - 1e-3);
  }
  CHECK(al.rmse < 0.02);

  const auto again = run(video, sc.intrinsics, cfg);
  REQUIRE(again.trajectory.size() == r.trajectory.size());
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    CHECK(geom::max_abs_difference(again.trajectory[i].pose, r.trajectory[i].pose) == 0.0);
  }

  // Same images under a different world frame: the estimate cannot change.
  const RigidTransform g{geom::Rotation::about_z(0.7), Vec3(3, -1, 0.5)};
  sim::Scene moved_scene = room();
  for (auto& l : moved_scene.landmarks) l.position = geom::apply(g, l.position);
  moved_scene.bounds_min = Vec3::Constant(-100);
  moved_scene.bounds_max = Vec3::Constant(100);
  const auto moved_path = traj::transform(path, g);
  auto [video2, gt2] = sim::generate_video(moved_scene, moved_path, sc.intrinsics, 30.0);
  const auto r2 = run(video2, sc.intrinsics, cfg);
  REQUIRE(r2.trajectory.size() == r.trajectory.size());
  const auto gauge = traj::align_umeyama(r2.trajectory, r.trajectory, false);
  CHECK(gauge.rmse < 1e-6);
}

TEST_CASE("run preconditions") {
  sim::SimConfig sc;
  OdometryConfig cfg;
  FrameSequence one;
  one.frames.push_back(sim::render(room(), sim::camera_pose(room_start(), sc), sc.intrinsics));
  CHECK_THROWS_AS(run(one, sc.intrinsics, cfg), Error);
  FrameSequence still = one;
  for (int i = 0; i < 30; ++i) still.frames.push_back(one.frames[0]);
  try {
    run(still, sc.intrinsics, cfg);
    FAIL("expected InitializationFailed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InitializationFailed);
  }
}
