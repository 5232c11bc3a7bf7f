#include "skyloop/geom.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace skyloop {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::LogNearPi: return "LogNearPi";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::PatchOutOfBounds: return "PatchOutOfBounds";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::InsufficientParallax: return "InsufficientParallax";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::CheiralityFailure: return "CheiralityFailure";
    case ErrorCode::LowParallax: return "LowParallax";
    case ErrorCode::HighReprojectionError: return "HighReprojectionError";
    case ErrorCode::InitializationFailed: return "InitializationFailed";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::TooFewAssociations: return "TooFewAssociations";
    case ErrorCode::NoAssociations: return "NoAssociations";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::DegenerateTable: return "DegenerateTable";
    case ErrorCode::ZeroErrorVariance: return "ZeroErrorVariance";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::GenerationTimeout: return "GenerationTimeout";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace skyloop

namespace skyloop::geom {

namespace {
constexpr double kPi = std::numbers::pi;
}

Rotation::Rotation(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::InvalidArgument, "quaternion must be finite and non-zero");
  }
  const double s = (w < 0.0 ? -1.0 : 1.0) / n;
  q_ = Eigen::Quaterniond(w * s, x * s, y * s, z * s);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::InvalidArgument, "rotation axis must be non-zero");
  return exp(axis / n * angle);
}

Rotation Rotation::exp(const Vec3& omega) {
  const double theta = omega.norm();
  const double half = 0.5 * theta;
  // sin(theta/2)/theta, Taylor-expanded near zero.
  const double k = theta < 1e-8 ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  return {std::cos(half), k * omega.x(), k * omega.y(), k * omega.z()};
}

Rotation Rotation::from_matrix(const Mat3& m) {
  return Rotation(Eigen::Quaterniond(m));
}

Vec3 Rotation::log() const {
  const Vec3 v(q_.x(), q_.y(), q_.z());
  const double n = v.norm();
  const double w = q_.w();
  if (n < 1e-12) {
    return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
  }
  return v * (2.0 * std::atan2(n, w) / n);
}

double Rotation::angle() const {
  const double n = Vec3(q_.x(), q_.y(), q_.z()).norm();
  return 2.0 * std::atan2(n, q_.w());
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

SimilarityTransform::SimilarityTransform(double s, const Rotation& r, const Vec3& t)
    : scale(s), rotation(r), translation(t) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "similarity scale must be positive");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidArgument, "principal point must lie inside the image");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

RigidTransform invert(const RigidTransform& t) {
  const Rotation r = t.rotation.inverse();
  return {r, -r.rotate(t.translation)};
}

Vec3 apply(const RigidTransform& t, const Vec3& p) {
  return t.rotation.rotate(p) + t.translation;
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p_cam) {
  if (p_cam.z() <= 1e-9) {
    throw Error(ErrorCode::NonPositiveDepth, "point is on or behind the camera plane");
  }
  const double iz = 1.0 / p_cam.z();
  return {k.fx * p_cam.x() * iz + k.cx, k.fy * p_cam.y() * iz + k.cy};
}

Vec3 unproject(const CameraIntrinsics& k, const Vec2& px) {
  return {(px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0};
}

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

TaitBryanAngles to_tait_bryan(const Rotation& r) {
  const Mat3 m = r.matrix();
  const double cos_pitch = std::hypot(m(0, 0), m(1, 0));
  TaitBryanAngles a;
  if (cos_pitch < 1e-12) {
    // Gimbal lock: only yaw - roll (or yaw + roll) is observable.
    a.pitch = m(2, 0) < 0.0 ? kPi / 2.0 : -kPi / 2.0;
    a.roll = 0.0;
    a.yaw = std::atan2(-m(0, 1), m(1, 1));
  } else {
    a.yaw = std::atan2(m(1, 0), m(0, 0));
    a.pitch = std::atan2(-m(2, 0), cos_pitch);
    a.roll = std::atan2(m(2, 1), m(2, 2));
  }
  a.yaw = wrap_angle(a.yaw);
  a.pitch = wrap_angle(a.pitch);
  a.roll = wrap_angle(a.roll);
  return a;
}

Rotation from_tait_bryan(const TaitBryanAngles& a) {
  return Rotation::about_z(a.yaw) * Rotation::from_axis_angle(Vec3::UnitY(), a.pitch) *
         Rotation::from_axis_angle(Vec3::UnitX(), a.roll);
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

RigidTransform se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  double a;
  double b;
  if (theta < 1e-8) {
    a = 0.5;
    b = 1.0 / 6.0;
  } else {
    const double s = std::sin(0.5 * theta);
    a = 2.0 * s * s / (theta * theta);
    if (theta < 1e-2) {
      const double t2 = theta * theta;
      b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    } else {
      b = (theta - std::sin(theta)) / (theta * theta * theta);
    }
  }
  const Mat3 vmat = Mat3::Identity() + a * w + b * w * w;
  return {Rotation::exp(omega), vmat * v};
}

Vec6 se3_log(const RigidTransform& t) {
  const double theta = t.rotation.angle();
  if (kPi - theta < 1e-6) {
    throw Error(ErrorCode::LogNearPi, "rotation angle too close to pi for a unique logarithm");
  }
  const Vec3 omega = t.rotation.log();
  const Mat3 w = skew(omega);
  double c;
  if (theta < 1e-2) {
    const double t2 = theta * theta;
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    c = (1.0 - half / std::tan(half)) / (theta * theta);
  }
  const Mat3 vinv = Mat3::Identity() - 0.5 * w + c * w * w;
  Vec6 out;
  out.head<3>() = omega;
  out.tail<3>() = vinv * t.translation;
  return out;
}

double huber_weight(double residual_norm, double delta) {
  return residual_norm <= delta ? 1.0 : delta / residual_norm;
}

double huber_cost(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - delta * delta;
}

double max_abs_difference(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace skyloop::geom
