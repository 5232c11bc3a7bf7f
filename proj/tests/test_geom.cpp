#include "doctest.h"
#include "helpers.hpp"
#include "skyloop/error.hpp"
#include "skyloop/geom.hpp"

using namespace skyloop;
using namespace skyloop::geom;
using namespace testutil;

TEST_CASE("compose and invert") {
  Rng rng(1);
  const RigidTransform t = random_pose(rng);
  CHECK(max_abs_difference(compose(t, RigidTransform::identity()), t) < 1e-12);
  CHECK(max_abs_difference(compose(t, invert(t)), RigidTransform::identity()) < 1e-9);
  const RigidTransform s = compose(RigidTransform::translate(1, 0, 0), RigidTransform::translate(0, 2, 0));
  CHECK(max_abs_difference(s, RigidTransform::translate(1, 2, 0)) < 1e-15);
  CHECK(max_abs_difference(invert(RigidTransform::identity()), RigidTransform::identity()) == 0.0);
  CHECK(max_abs_difference(invert(RigidTransform::translate(1, 2, 3)), RigidTransform::translate(-1, -2, -3)) <
        1e-15);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform p = random_pose(rng);
    CHECK(max_abs_difference(invert(invert(p)), p) < 1e-9);
    CHECK(max_abs_difference(compose(p, invert(p)), RigidTransform::identity()) < 1e-9);
  }
}

TEST_CASE("quaternion stays unit and canonical") {
  Rng rng(2);
  RigidTransform acc;
  for (int i = 0; i < 1000; ++i) {
    acc = compose(acc, random_pose(rng));
    CHECK(std::abs(acc.rotation.quaternion().norm() - 1.0) < 1e-9);
    CHECK(acc.rotation.w() >= 0.0);
  }
  const Rotation r(-0.5, 0.5, 0.5, 0.5);
  CHECK(r.w() > 0.0);
}

TEST_CASE("apply") {
  CHECK((apply(RigidTransform::identity(), Vec3(1, 2, 3)) - Vec3(1, 2, 3)).norm() == 0.0);
  const RigidTransform yaw{Rotation::about_z(kPi / 2), Vec3::Zero()};
  CHECK((apply(yaw, Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm() < 1e-9);
  CHECK((apply(RigidTransform::translate(1, 0, 0), Vec3::Zero()) - Vec3(1, 0, 0)).norm() == 0.0);
}

TEST_CASE("project") {
  CameraIntrinsics k;
  CHECK((project(k, Vec3(0, 0, 2)) - Vec2(320, 240)).norm() == 0.0);
  CHECK((project(k, Vec3(1, 0, 2)) - Vec2(570, 240)).norm() == 0.0);
  try {
    project(k, Vec3(0, 0, -1));
    FAIL("expected NonPositiveDepth");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveDepth);
  }
  CHECK_THROWS_AS(project(k, Vec3(0, 0, 1e-10)), Error);
  const Vec3 b = unproject(k, Vec2(570, 240));
  CHECK((b - Vec3(0.5, 0, 1)).norm() < 1e-15);
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics k;
  CHECK_NOTHROW(k.validate());
  k.cx = 640;
  CHECK_THROWS_AS(k.validate(), Error);
  k = {};
  k.fx = 0;
  CHECK_THROWS_AS(k.validate(), Error);
}

TEST_CASE("tait-bryan angles") {
  const auto id = to_tait_bryan(Rotation::identity());
  CHECK(id.yaw == 0.0);
  CHECK(id.pitch == 0.0);
  CHECK(id.roll == 0.0);
  const auto q = to_tait_bryan(Rotation(std::cos(kPi / 4), 0, 0, std::sin(kPi / 4)));
  CHECK(q.yaw == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(std::abs(q.pitch) < 1e-12);
  CHECK(std::abs(q.roll) < 1e-12);

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    TaitBryanAngles a{rng.uniform(-kPi, kPi), rng.uniform(-1.4, 1.4), rng.uniform(-kPi, kPi)};
    const Rotation r = from_tait_bryan(a);
    const auto back = to_tait_bryan(r);
    CHECK(quat_distance(from_tait_bryan(back), r) < 1e-9);
    CHECK(back.yaw > -kPi);
    CHECK(back.yaw <= kPi);
  }
  // Z-Y-X: yaw applied last.
  const Rotation composed = Rotation::about_z(0.3) * Rotation::from_axis_angle(Vec3::UnitY(), 0.2) *
                            Rotation::from_axis_angle(Vec3::UnitX(), 0.1);
  const auto zyx = to_tait_bryan(composed);
  CHECK(zyx.yaw == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(zyx.pitch == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(zyx.roll == doctest::Approx(0.1).epsilon(1e-12));
  const auto lock = to_tait_bryan(Rotation::from_axis_angle(Vec3::UnitY(), kPi / 2));
  CHECK(lock.roll == 0.0);
}

TEST_CASE("wrap_angle range") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("se3 exp and log") {
  CHECK(max_abs_difference(se3_exp(Vec6::Zero()), RigidTransform::identity()) == 0.0);
  Vec6 tx;
  tx << 0, 0, 0, 1, 0, 0;
  CHECK(max_abs_difference(se3_exp(tx), RigidTransform::translate(1, 0, 0)) < 1e-15);
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 w(rng.normal(), rng.normal(), rng.normal());
    w = w.normalized() * rng.uniform(0.0, 3.0);
    Vec6 v;
    v << w, random_vec(rng, -2, 2);
    worst = std::max(worst, (se3_log(se3_exp(v)) - v).cwiseAbs().maxCoeff());
    const RigidTransform t = se3_exp(v);
    worst = std::max(worst, max_abs_difference(se3_exp(se3_log(t)), t));
  }
  CHECK(worst < 1e-9);
  const RigidTransform half_turn{Rotation::from_axis_angle(Vec3::UnitX(), kPi), Vec3::Zero()};
  try {
    se3_log(half_turn);
    FAIL("expected LogNearPi");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LogNearPi);
  }
}

TEST_CASE("huber weight and cost") {
  CHECK(huber_weight(0.5, 1.0) == 1.0);
  CHECK(huber_weight(2.0, 1.0) == 0.5);
  CHECK(huber_weight(1.0, 1.0) == 1.0);
  double prev = 1.0;
  for (double r = 0.0; r < 10.0; r += 0.01) {
    const double w = huber_weight(r, 1.5);
    CHECK(w <= prev);
    prev = w;
  }
  CHECK(huber_weight(1.5 + 1e-12, 1.5) == doctest::Approx(1.0));
  CHECK(huber_cost(1.0, 2.0) == doctest::Approx(1.0));
  // Linear branch: 2*delta*|r| - delta^2.
  CHECK(huber_cost(9.0, 2.0) == doctest::Approx(2 * 2.0 * 3.0 - 4.0));
  CHECK(huber_cost(4.0, 2.0) == doctest::Approx(4.0));
}

TEST_CASE("similarity transform") {
  CHECK_THROWS_AS(SimilarityTransform(0.0, Rotation(), Vec3::Zero()), Error);
  const SimilarityTransform s(2.0, Rotation::about_z(kPi / 2), Vec3(1, 2, 3));
  CHECK((s.apply(Vec3(1, 0, 0)) - Vec3(1, 4, 3)).norm() < 1e-12);
}
