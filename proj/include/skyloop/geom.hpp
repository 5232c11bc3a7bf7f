#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "skyloop/error.hpp"

namespace skyloop::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Unit quaternion stored as (w, x, y, z), normalized on construction with
/// the double cover resolved to w >= 0.
class Rotation {
 public:
  Rotation() = default;
  Rotation(double w, double x, double y, double z);
  explicit Rotation(const Eigen::Quaterniond& q) : Rotation(q.w(), q.x(), q.y(), q.z()) {}

  static Rotation identity() { return {}; }
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  /// Rotation vector (axis * angle), i.e. the SO(3) exponential.
  static Rotation exp(const Vec3& omega);
  static Rotation from_matrix(const Mat3& m);
  static Rotation about_z(double angle) { return from_axis_angle(Vec3::UnitZ(), angle); }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  /// Rotation vector; angle in [0, pi].
  Vec3 log() const;
  double angle() const;

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    return Rotation(a.q_ * b.q_);
  }

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Element of SE(3): p -> R p + t.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(double x, double y, double z) {
    return {Rotation::identity(), Vec3(x, y, z)};
  }

  Eigen::Matrix4d matrix() const;
};

struct SimilarityTransform {
  double scale = 1.0;
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  SimilarityTransform() = default;
  SimilarityTransform(double s, const Rotation& r, const Vec3& t);

  Vec3 apply(const Vec3& p) const { return scale * rotation.rotate(p) + translation; }
};

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;
  bool contains(const Vec2& px, double margin = 0.0) const {
    return px.x() >= margin && px.y() >= margin && px.x() < width - margin &&
           px.y() < height - margin;
  }
};

/// Intrinsic Z-Y-X angles, each in (-pi, pi].
struct TaitBryanAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
Vec3 apply(const RigidTransform& t, const Vec3& p);

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p_cam);
/// Bearing in the camera frame (z = 1 plane) for a pixel.
Vec3 unproject(const CameraIntrinsics& k, const Vec2& px);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

TaitBryanAngles to_tait_bryan(const Rotation& r);
Rotation from_tait_bryan(const TaitBryanAngles& a);
inline double yaw_of(const Rotation& r) { return to_tait_bryan(r).yaw; }

Mat3 skew(const Vec3& v);

/// Twist ordering is (omega, v): rotation first, then translation.
RigidTransform se3_exp(const Vec6& twist);
Vec6 se3_log(const RigidTransform& t);

/// Huber IRLS weight for a residual norm.
double huber_weight(double residual_norm, double delta);
/// Huber loss applied to a squared residual norm.
double huber_cost(double squared_norm, double delta);

/// Elementwise distance between the 4x4 matrices.
double max_abs_difference(const RigidTransform& a, const RigidTransform& b);

}  // namespace skyloop::geom
