#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "skyloop/trajectory.hpp"

using namespace skyloop;
using namespace skyloop::traj;
using namespace testutil;

namespace {

Trajectory from_points(const std::vector<Vec3>& pts, double dt = 0.1) {
  Trajectory t;
  for (std::size_t i = 0; i < pts.size(); ++i) t.push_back(i * dt, RigidTransform{Rotation(), pts[i]});
  return t;
}

Trajectory random_walk(Rng& rng, int n) {
  Trajectory t;
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    p += random_vec(rng, -0.3, 0.3);
    t.push_back(i * 0.05, RigidTransform{random_rotation(rng, 0.5), p});
  }
  return t;
}

}  // namespace

TEST_CASE("trajectory container") {
  Trajectory t;
  t.push_back(0.0, RigidTransform::identity());
  CHECK_THROWS_AS(t.push_back(0.0, RigidTransform::identity()), Error);
  t.push_back(1.0, RigidTransform::translate(3, 4, 0));
  CHECK(t.path_length() == doctest::Approx(5.0));
  CHECK((t.interpolate(0.5).translation - Vec3(1.5, 2, 0)).norm() < 1e-12);
  CHECK((t.interpolate(-1).translation).norm() == 0.0);
  CHECK((t.interpolate(9).translation - Vec3(3, 4, 0)).norm() == 0.0);
  CHECK_THROWS_AS(Trajectory().interpolate(0.0), Error);
}

TEST_CASE("association") {
  const Trajectory a = from_points({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, 0.1);
  Trajectory b;
  b.push_back(0.01, {});
  b.push_back(0.12, {});
  b.push_back(5.0, {});
  const auto pairs = associate(a, b, 0.05);
  CHECK(pairs == IndexPairs{{0, 0}, {1, 1}});
  Trajectory far;
  far.push_back(9.0, {});
  try {
    associate(a, far, 0.05);
    FAIL("expected NoAssociations");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoAssociations);
  }
}

TEST_CASE("umeyama examples") {
  const std::vector<Vec3> ref{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const Trajectory r = from_points(ref);
  const auto same = align_umeyama(r, r, true);
  CHECK(same.transform.scale == doctest::Approx(1.0));
  CHECK(same.transform.rotation.angle() < 1e-9);
  CHECK(same.transform.translation.norm() < 1e-9);
  CHECK(same.rmse < 1e-12);

  const geom::SimilarityTransform fwd(2.0, Rotation::about_z(kPi / 2), Vec3(1, 2, 3));
  std::vector<Vec3> est;
  for (const auto& p : ref) est.push_back(fwd.apply(p));
  const auto al = align_umeyama(from_points(est), r, true);
  CHECK(al.rmse < 1e-9);
  CHECK(al.transform.scale == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(quat_distance(al.transform.rotation, Rotation::about_z(-kPi / 2)) < 1e-12);
  const Vec3 expected_t = -0.5 * Rotation::about_z(-kPi / 2).rotate(Vec3(1, 2, 3));
  CHECK((al.transform.translation - expected_t).norm() < 1e-12);

  try {
    align_umeyama(from_points({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}), from_points({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}), true);
    FAIL("expected DegenerateGeometry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateGeometry);
  }
  try {
    align_umeyama(from_points({{0, 0, 0}, {1, 0, 0}}), from_points({{0, 0, 0}, {1, 0, 0}}), true);
    FAIL("expected TooFewAssociations");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewAssociations);
  }
}

TEST_CASE("umeyama residual is invariant to rigid pre-transform") {
  Rng rng(31);
  const Trajectory ref = random_walk(rng, 50);
  Trajectory est;
  for (const auto& s : ref) {
    est.push_back(s.timestamp, RigidTransform{s.pose.rotation, 0.7 * s.pose.translation + random_vec(rng, -0.05, 0.05)});
  }
  const double base = align_umeyama(est, ref, true).rmse;
  const double base_rigid = align_umeyama(est, ref, false).rmse;
  for (int i = 0; i < 20; ++i) {
    const Trajectory moved = transform(est, random_pose(rng));
    CHECK(std::abs(align_umeyama(moved, ref, true).rmse - base) < 1e-9);
    CHECK(std::abs(align_umeyama(moved, ref, false).rmse - base_rigid) < 1e-9);
  }
}

TEST_CASE("alignment of nearly straight paths") {
  Trajectory ref;
  Trajectory est;
  const geom::SimilarityTransform s(3.0, Rotation::about_z(0.4), Vec3(1, -2, 0.5));
  Rng rng(32);
  for (int i = 0; i < 40; ++i) {
    const RigidTransform p{Rotation::about_z(0.01 * i), Vec3(0.05 * i, 1e-4 * rng.normal(), 0)};
    ref.push_back(i * 0.1, p);
    // est = s^-1 * ref
    const Rotation ri = s.rotation.inverse();
    est.push_back(i * 0.1, RigidTransform{ri * p.rotation, ri.rotate(p.translation - s.translation) / s.scale});
  }
  const auto al = align(est, ref, true);
  CHECK(al.orientation_aided);
  CHECK(al.transform.scale == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(quat_distance(al.transform.rotation, s.rotation) < 1e-6);
  CHECK(al.rmse < 1e-6);

  Rng rng2(33);
  const Trajectory walk = random_walk(rng2, 30);
  CHECK_FALSE(align(walk, walk, true).orientation_aided);
}

TEST_CASE("waypoints") {
  CHECK(to_waypoints(from_points({{0, 0, 0}, {0.1, 0, 0}}), 1.0, {}).size() == 2);
  std::vector<Vec3> line;
  for (int i = 0; i <= 50; ++i) line.emplace_back(0.1 * i, 0, 0);
  const auto wps = to_waypoints(from_points(line), 1.0, {});
  REQUIRE(wps.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(wps[i].pose.translation.x() == doctest::Approx(i).epsilon(1e-9));
  const auto still = to_waypoints(from_points({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}), 0.5, {});
  REQUIRE(still.size() == 2);
  CHECK(geom::max_abs_difference(still[0].pose, still[1].pose) == 0.0);
  CHECK_THROWS_AS(to_waypoints(from_points(line), 0.0, {}), Error);

  Rng rng(34);
  const Trajectory walk = random_walk(rng, 200);
  const auto w = to_waypoints(walk, 0.7, {});
  std::size_t cursor = 0;
  double arc = 0.0;
  std::vector<double> arcs{0.0};
  for (std::size_t i = 1; i < walk.size(); ++i) {
    arc += (walk[i].pose.translation - walk[i - 1].pose.translation).norm();
    arcs.push_back(arc);
  }
  std::vector<std::size_t> idx;
  for (const auto& wp : w) {
    while (cursor < walk.size() && geom::max_abs_difference(walk[cursor].pose, wp.pose) != 0.0) ++cursor;
    REQUIRE(cursor < walk.size());
    idx.push_back(cursor++);
  }
  CHECK(idx.front() == 0);
  CHECK(idx.back() == walk.size() - 1);
  for (std::size_t i = 1; i + 1 < idx.size(); ++i) CHECK(arcs[idx[i]] - arcs[idx[i - 1]] >= 0.7);
}

TEST_CASE("velocity command") {
  ControllerGains g;
  ControlLimits l;
  Waypoint wp{RigidTransform::translate(2, 0, 0), {}};
  auto c = velocity_command({}, wp, g, l);
  CHECK((c.linear - Vec3(1, 0, 0)).norm() < 1e-12);
  c = velocity_command({Vec3(2, 0, 0), Rotation()}, wp, g, l);
  CHECK(c.linear.norm() == 0.0);
  CHECK(c.yaw_rate == 0.0);
  Waypoint a{{Rotation::about_z(kPi - 0.1), Vec3::Zero()}, {}};
  Waypoint b{{Rotation::about_z(-kPi + 0.1), Vec3::Zero()}, {}};
  ControllerGains slow{1.0, 0.1};
  const double ya = velocity_command({}, a, slow, l).yaw_rate;
  const double yb = velocity_command({}, b, slow, l).yaw_rate;
  CHECK(ya > 0.0);
  CHECK(ya == doctest::Approx(-yb).epsilon(1e-12));
  CHECK_THROWS_AS(velocity_command({}, wp, ControllerGains{0.0, 1.0}, l), Error);

  Rng rng(35);
  for (int i = 0; i < 100000; ++i) {
    const PoseState s{random_vec(rng, -50, 50), random_rotation(rng)};
    const Waypoint t{random_pose(rng, kPi, 50), {}};
    const ControllerGains gg{rng.uniform(0.01, 10), rng.uniform(0.01, 10)};
    const ControlLimits ll{rng.uniform(0.1, 5), rng.uniform(0.1, 5)};
    const auto cmd = velocity_command(s, t, gg, ll);
    REQUIRE(cmd.linear.norm() <= ll.v_max * (1 + 1e-12));
    REQUIRE(std::abs(cmd.yaw_rate) <= ll.omega_max * (1 + 1e-12));
    if (waypoint_reached(s, t)) REQUIRE(cmd.linear.norm() <= gg.kp_linear * t.tolerance.position + 1e-12);
  }
}

TEST_CASE("waypoint reached") {
  const Waypoint wp{{Rotation::about_z(0.2), Vec3(1, 1, 1)}, {}};
  CHECK(waypoint_reached({Vec3(1, 1, 1), Rotation::about_z(0.2)}, wp));
  CHECK_FALSE(waypoint_reached({Vec3(1.2, 1, 1), Rotation::about_z(0.2)}, wp));
  CHECK_FALSE(waypoint_reached({Vec3(1.05, 1, 1), Rotation::about_z(0.5)}, wp));
}

TEST_CASE("rescale") {
  Rng rng(36);
  const Trajectory t = random_walk(rng, 20);
  const Trajectory one = rescale(t, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(geom::max_abs_difference(one[i].pose, t[i].pose) == 0.0);
  const Trajectory step = from_points({{0, 0, 0}, {1, 0, 0}});
  CHECK(rescale(step, 2.0)[1].pose.translation.x() == 2.0);
  const Trajectory back = rescale(rescale(t, 2.0), 0.5);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(geom::max_abs_difference(back[i].pose, t[i].pose) < 1e-12);
    CHECK(back[i].timestamp == t[i].timestamp);
  }
  CHECK_THROWS_AS(rescale(t, 0.0), Error);
}

TEST_CASE("state action pairs") {
  const Trajectory t = from_points({{0, 0, 0}, {0.1, 0, 0}, {0.1, 0.2, 0}}, 0.1);
  const auto sa = state_action_pairs(t);
  REQUIRE(sa.size() == 3);
  CHECK((sa[0].action.linear - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((sa[1].action.linear - Vec3(0, 2, 0)).norm() < 1e-12);
  CHECK(sa[2].action.linear.norm() == 0.0);
  for (const auto& p : sa) CHECK(std::abs(p.state.orientation.quaternion().norm() - 1.0) < 1e-12);
}

TEST_CASE("trajectory text format") {
  Rng rng(37);
  const Trajectory t = random_walk(rng, 10);
  std::stringstream ss;
  ss << "# header\n";
  write_trajectory(ss, t);
  const Trajectory back = read_trajectory(ss);
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(std::abs(back[i].timestamp - t[i].timestamp) < 1e-8);
    CHECK((back[i].pose.translation - t[i].pose.translation).norm() < 1e-7);
  }
  std::stringstream again;
  write_trajectory(again, back);
  std::stringstream orig;
  write_trajectory(orig, t);
  CHECK(again.str() == orig.str());

  std::stringstream one;
  write_trajectory(one, from_points({{1, 2, 3}}));
  CHECK(one.str() == "# timestamp tx ty tz qx qy qz qw\n0 1 2 3 0 0 0 1\n");

  std::stringstream bad("0 1 2\n");
  CHECK_THROWS_AS(read_trajectory(bad), Error);
}
