#pragma once

#include <cmath>
#include <numbers>

#include "skyloop/geom.hpp"
#include "skyloop/rng.hpp"

namespace testutil {

using skyloop::Rng;
using skyloop::geom::RigidTransform;
using skyloop::geom::Rotation;
using skyloop::geom::Vec3;

constexpr double kPi = std::numbers::pi;

inline Vec3 random_vec(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

inline Rotation random_rotation(Rng& rng, double max_angle = kPi - 1e-3) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return Rotation::from_axis_angle(axis, rng.uniform(0.0, max_angle));
}

inline RigidTransform random_pose(Rng& rng, double max_angle = kPi - 1e-3, double extent = 3.0) {
  return {random_rotation(rng, max_angle), random_vec(rng, -extent, extent)};
}

inline double quat_distance(const Rotation& a, const Rotation& b) {
  const double d1 = (a.quaternion().coeffs() - b.quaternion().coeffs()).cwiseAbs().maxCoeff();
  const double d2 = (a.quaternion().coeffs() + b.quaternion().coeffs()).cwiseAbs().maxCoeff();
  return std::min(d1, d2);
}

}  // namespace testutil
