#include "skyloop/odometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "skyloop/rng.hpp"

namespace skyloop::vo {

using geom::Mat3;
using geom::Vec6;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinDepth = 1e-9;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double deg2rad(double d) { return d * kDegToRad; }

// Projection of a camera-frame point; false when it is not in front.
bool project_checked(const CameraIntrinsics& k, const Vec3& pc, Vec2& px) {
  if (pc.z() <= kMinDepth) return false;
  px = Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  return true;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

const features::BriefPattern& brief_pattern() {
  static const features::BriefPattern pattern(42);
  return pattern;
}

template <int N>
Eigen::Matrix<double, N, N> marquardt(const Eigen::Matrix<double, N, N>& h, double lambda) {
  Eigen::Matrix<double, N, N> d = h;
  for (int i = 0; i < N; ++i) d(i, i) += lambda * std::max(h(i, i), 1e-12);
  return d;
}

}  // namespace

void OdometryConfig::validate() const {
  const bool ok = huber_delta > 0 && ransac_iterations > 0 && ransac_threshold > 0 &&
                  outlier_threshold > 0 && lm_max_iterations > 0 && lm_epsilon > 0 &&
                  pose_rounds > 0 && min_inliers > 0 && min_init_matches > 0 &&
                  min_init_inlier_ratio > 0 && min_parallax_deg > 0 &&
                  triangulation_max_error > 0 && keyframe_ratio > 0 && keyframe_max_gap > 0 &&
                  ba_window > 0 && ba_iterations > 0 && covisibility_threshold > 0 &&
                  max_lost_frames > 0 && init_frame_limit > 1 && track_radius > 0 &&
                  refine_radius > 0 && max_descriptor_distance > 0 && match_ratio > 0 &&
                  match_ratio <= 1.0;
  if (!ok) throw Error(ErrorCode::InvalidArgument, "odometry thresholds must be positive");
}

Frame extract_frame(const GrayImage& img, double timestamp, const OdometryConfig& cfg) {
  std::vector<Keypoint> kps = features::detect(img, cfg.detector);
  if (cfg.oriented_descriptors) {
    for (auto& kp : kps) {
      try {
        kp.orientation = features::compute_orientation(img, kp);
      } catch (const Error&) {
        kp.orientation = 0.0;
      }
    }
  }
  features::Described d = features::describe(img, kps, brief_pattern());
  Frame f;
  f.timestamp = timestamp;
  f.width = img.width();
  f.height = img.height();
  f.keypoints = std::move(d.keypoints);
  f.descriptors = std::move(d.descriptors);
  return f;
}

// ---------------------------------------------------------------------------
// SparseMap

int SparseMap::add_keyframe(const Frame& frame, const RigidTransform& pose) {
  Keyframe kf;
  kf.id = static_cast<int>(keyframes_.size());
  kf.timestamp = frame.timestamp;
  kf.pose = pose;
  kf.keypoints = frame.keypoints;
  kf.descriptors = frame.descriptors;
  kf.point_ids.assign(frame.keypoints.size(), -1);
  keyframes_.push_back(std::move(kf));
  return keyframes_.back().id;
}

int SparseMap::add_point(const Vec3& position, const BinaryDescriptor& descriptor) {
  if (!position.allFinite()) throw Error(ErrorCode::InvalidArgument, "map point must be finite");
  MapPoint p;
  p.id = next_point_id_++;
  p.position = position;
  p.descriptor = descriptor;
  points_.emplace(p.id, std::move(p));
  return next_point_id_ - 1;
}

MapPoint* SparseMap::point(int id) {
  auto it = points_.find(id);
  return it == points_.end() ? nullptr : &it->second;
}

const MapPoint* SparseMap::point(int id) const {
  auto it = points_.find(id);
  return it == points_.end() ? nullptr : &it->second;
}

void SparseMap::add_observation(int point_id, int keyframe_id, int keypoint) {
  MapPoint* p = point(point_id);
  if (p == nullptr) throw Error(ErrorCode::InvalidArgument, "unknown map point");
  if (keyframe_id < 0 || keyframe_id >= static_cast<int>(keyframes_.size())) {
    throw Error(ErrorCode::InvalidArgument, "unknown keyframe");
  }
  Keyframe& kf = keyframes_[static_cast<std::size_t>(keyframe_id)];
  if (keypoint < 0 || keypoint >= static_cast<int>(kf.point_ids.size())) {
    throw Error(ErrorCode::InvalidArgument, "keypoint index out of range");
  }
  if (kf.point_ids[static_cast<std::size_t>(keypoint)] != -1) {
    throw Error(ErrorCode::InvalidArgument, "keypoint already carries a map point");
  }
  for (const auto& o : p->observations) {
    if (o.keyframe == keyframe_id) {
      throw Error(ErrorCode::InvalidArgument, "point already observed by this keyframe");
    }
  }
  p->observations.push_back({keyframe_id, keypoint});
  kf.point_ids[static_cast<std::size_t>(keypoint)] = point_id;
}

void SparseMap::remove_observation(int point_id, int keyframe_id) {
  MapPoint* p = point(point_id);
  if (p == nullptr) return;
  auto& obs = p->observations;
  for (auto it = obs.begin(); it != obs.end(); ++it) {
    if (it->keyframe == keyframe_id) {
      keyframes_[static_cast<std::size_t>(keyframe_id)].point_ids[static_cast<std::size_t>(it->keypoint)] = -1;
      obs.erase(it);
      return;
    }
  }
}

void SparseMap::remove_point(int point_id) {
  MapPoint* p = point(point_id);
  if (p == nullptr) return;
  for (const auto& o : p->observations) {
    keyframes_[static_cast<std::size_t>(o.keyframe)].point_ids[static_cast<std::size_t>(o.keypoint)] = -1;
  }
  points_.erase(point_id);
}

int SparseMap::tracked_points(int keyframe_id) const {
  const Keyframe& kf = keyframe(keyframe_id);
  return static_cast<int>(std::count_if(kf.point_ids.begin(), kf.point_ids.end(),
                                        [](int id) { return id >= 0; }));
}

std::vector<std::pair<int, int>> SparseMap::covisibility_edges(int min_shared) const {
  std::map<std::pair<int, int>, int> shared;
  for (const auto& [id, p] : points_) {
    for (std::size_t i = 0; i < p.observations.size(); ++i) {
      for (std::size_t j = i + 1; j < p.observations.size(); ++j) {
        int a = p.observations[i].keyframe;
        int b = p.observations[j].keyframe;
        if (a > b) std::swap(a, b);
        ++shared[{a, b}];
      }
    }
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& [e, n] : shared) {
    if (n >= min_shared) edges.push_back(e);
  }
  return edges;
}

void SparseMap::update_descriptor(int point_id) {
  MapPoint* p = point(point_id);
  if (p == nullptr || p->observations.empty()) return;
  std::vector<BinaryDescriptor> ds;
  ds.reserve(p->observations.size());
  for (const auto& o : p->observations) {
    ds.push_back(keyframe(o.keyframe).descriptors[static_cast<std::size_t>(o.keypoint)]);
  }
  std::size_t best = 0;
  int best_sum = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int sum = 0;
    for (std::size_t j = 0; j < ds.size(); ++j) sum += simd::hamming_distance(ds[i], ds[j]);
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  p->descriptor = ds[best];
}

void SparseMap::check_consistency() const {
  for (const auto& [id, p] : points_) {
    if (p.observations.empty()) throw Error(ErrorCode::InvalidArgument, "point without observations");
    if (!p.position.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite point");
    for (const auto& o : p.observations) {
      if (o.keyframe < 0 || o.keyframe >= static_cast<int>(keyframes_.size())) {
        throw Error(ErrorCode::InvalidArgument, "observation references a missing keyframe");
      }
      const Keyframe& kf = keyframes_[static_cast<std::size_t>(o.keyframe)];
      if (o.keypoint < 0 || o.keypoint >= static_cast<int>(kf.point_ids.size()) ||
          kf.point_ids[static_cast<std::size_t>(o.keypoint)] != id) {
        throw Error(ErrorCode::InvalidArgument, "observation references a missing keypoint");
      }
    }
  }
  for (const auto& kf : keyframes_) {
    for (std::size_t i = 0; i < kf.point_ids.size(); ++i) {
      if (kf.point_ids[i] >= 0 && point(kf.point_ids[i]) == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "keyframe references a missing point");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pose optimization

ReprojectionJacobians reprojection_jacobians(const RigidTransform& world_to_cam, const Vec3& point,
                                             const CameraIntrinsics& k) {
  const Mat3 r = world_to_cam.rotation.matrix();
  const Vec3 pc = r * point + world_to_cam.translation;
  ReprojectionJacobians j;
  j.projection = geom::project(k, pc);
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,  //
      0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
  j.d_pose.leftCols<3>() = -dproj * geom::skew(pc);
  j.d_pose.rightCols<3>() = dproj;
  j.d_point = dproj * r;
  return j;
}

namespace {

double pose_cost(const RigidTransform& t, std::span<const Correspondence> corr,
                 const std::vector<char>& active, const CameraIntrinsics& k, double delta) {
  const Mat3 r = t.rotation.matrix();
  double cost = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!active[i]) continue;
    Vec2 px;
    if (!project_checked(k, r * corr[i].point + t.translation, px)) return kInf;
    cost += geom::huber_cost((px - corr[i].pixel).squaredNorm(), delta);
  }
  return cost;
}

// Levenberg-Marquardt with IRLS weights; returns the pose, appends accepted costs.
RigidTransform lm_pose(RigidTransform t, std::span<const Correspondence> corr,
                       const std::vector<char>& active, const CameraIntrinsics& k,
                       const OdometryConfig& cfg, std::vector<double>& history) {
  double cost = pose_cost(t, corr, active, k, cfg.huber_delta);
  if (!std::isfinite(cost)) throw Error(ErrorCode::Diverged, "initial pose puts points behind the camera");
  double lambda = 1e-4;
  bool accepted_any = false;
  for (int it = 0; it < cfg.lm_max_iterations; ++it) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < corr.size(); ++i) {
      if (!active[i]) continue;
      const ReprojectionJacobians j = reprojection_jacobians(t, corr[i].point, k);
      const Vec2 r = j.projection - corr[i].pixel;
      const double w = geom::huber_weight(r.norm(), cfg.huber_delta);
      h.noalias() += w * j.d_pose.transpose() * j.d_pose;
      g.noalias() += w * j.d_pose.transpose() * r;
    }
    if (g.norm() == 0.0) return t;
    bool stepped = false;
    while (!stepped) {
      const Vec6 step = marquardt<6>(h, lambda).ldlt().solve(-g);
      if (!step.allFinite()) throw Error(ErrorCode::Diverged, "singular pose system");
      if (step.norm() < cfg.lm_epsilon) return t;
      const RigidTransform cand = geom::compose(geom::se3_exp(step), t);
      const double c = pose_cost(cand, corr, active, k, cfg.huber_delta);
      if (c < cost) {
        t = cand;
        cost = c;
        history.push_back(c);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted_any = true;
        stepped = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e8) {
          if (accepted_any) return t;
          throw Error(ErrorCode::Diverged, "damping exceeded 1e8 without cost reduction");
        }
      }
    }
  }
  return t;
}

}  // namespace

TrackResult optimize_pose(const RigidTransform& init, std::span<const Correspondence> corr,
                          const CameraIntrinsics& k, const OdometryConfig& cfg) {
  if (corr.size() < 4) throw Error(ErrorCode::TooFewCorrespondences, "pose needs at least 4 correspondences");
  TrackResult res;
  std::vector<char> all(corr.size(), 1);
  res.initial_cost = pose_cost(init, corr, all, k, cfg.huber_delta);
  RigidTransform t = init;
  std::vector<char> active = all;
  std::vector<char> outlier(corr.size(), 0);
  for (int round = 0; round < cfg.pose_rounds; ++round) {
    if (std::count(active.begin(), active.end(), 1) < 4) break;
    res.cost_history.emplace_back();
    t = lm_pose(t, corr, active, k, cfg, res.cost_history.back());
    const Mat3 r = t.rotation.matrix();
    bool changed = false;
    for (std::size_t i = 0; i < corr.size(); ++i) {
      Vec2 px;
      const bool bad = !project_checked(k, r * corr[i].point + t.translation, px) ||
                       (px - corr[i].pixel).norm() > cfg.outlier_threshold;
      changed = changed || (bad != static_cast<bool>(outlier[i]));
      outlier[i] = bad ? 1 : 0;
      active[i] = bad ? 0 : 1;
    }
    if (!changed && round > 0) break;
  }
  res.pose = t;
  res.outlier = outlier;
  res.final_cost = pose_cost(t, corr, all, k, cfg.huber_delta);
  const Mat3 r = t.rotation.matrix();
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (outlier[i]) continue;
    Vec2 px;
    project_checked(k, r * corr[i].point + t.translation, px);
    sum += (px - corr[i].pixel).norm();
    ++res.inliers;
  }
  res.mean_error = res.inliers > 0 ? sum / res.inliers : 0.0;
  res.status = res.inliers >= cfg.min_inliers ? TrackStatus::Ok : TrackStatus::Lost;
  return res;
}

// ---------------------------------------------------------------------------
// Triangulation

double triangulation_angle(const RigidTransform& pose_a, const RigidTransform& pose_b,
                           const Vec3& point) {
  const Vec3 ca = -(pose_a.rotation.inverse().rotate(pose_a.translation));
  const Vec3 cb = -(pose_b.rotation.inverse().rotate(pose_b.translation));
  const Vec3 a = point - ca;
  const Vec3 b = point - cb;
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

namespace {

// Homogeneous DLT solution; false at infinity.
bool dlt(const RigidTransform& pa, const RigidTransform& pb, const Vec3& ba, const Vec3& bb, Vec3& x) {
  Eigen::Matrix<double, 3, 4> ma;
  Eigen::Matrix<double, 3, 4> mb;
  ma << pa.rotation.matrix(), pa.translation;
  mb << pb.rotation.matrix(), pb.translation;
  Eigen::Matrix4d a;
  a.row(0) = ba.x() * ma.row(2) - ma.row(0);
  a.row(1) = ba.y() * ma.row(2) - ma.row(1);
  a.row(2) = bb.x() * mb.row(2) - mb.row(0);
  a.row(3) = bb.y() * mb.row(2) - mb.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12) return false;
  x = h.head<3>() / h(3);
  return x.allFinite();
}

}  // namespace

Vec3 triangulate(const RigidTransform& pose_a, const RigidTransform& pose_b, const Vec2& px_a,
                 const Vec2& px_b, const CameraIntrinsics& k, const TriangulationOptions& options) {
  const Vec3 ca = -(pose_a.rotation.inverse().rotate(pose_a.translation));
  const Vec3 cb = -(pose_b.rotation.inverse().rotate(pose_b.translation));
  if ((ca - cb).norm() < 1e-12) throw Error(ErrorCode::LowParallax, "zero baseline");
  Vec3 x;
  if (!dlt(pose_a, pose_b, geom::unproject(k, px_a), geom::unproject(k, px_b), x)) {
    throw Error(ErrorCode::LowParallax, "point at infinity");
  }
  if (triangulation_angle(pose_a, pose_b, x) < deg2rad(options.min_angle_deg)) {
    throw Error(ErrorCode::LowParallax, "triangulation angle below threshold");
  }
  Vec2 ra;
  Vec2 rb;
  if (!project_checked(k, geom::apply(pose_a, x), ra) || !project_checked(k, geom::apply(pose_b, x), rb)) {
    throw Error(ErrorCode::CheiralityFailure, "point behind a camera");
  }
  if ((ra - px_a).norm() > options.max_error || (rb - px_b).norm() > options.max_error) {
    throw Error(ErrorCode::HighReprojectionError, "reprojection error above threshold");
  }
  return x;
}

// ---------------------------------------------------------------------------
// Two-view initialization

namespace {

Mat3 hartley(const std::vector<Vec2>& pts, std::span<const int> idx) {
  Vec2 c = Vec2::Zero();
  for (int i : idx) c += pts[static_cast<std::size_t>(i)];
  c /= static_cast<double>(idx.size());
  double d = 0.0;
  for (int i : idx) d += (pts[static_cast<std::size_t>(i)] - c).norm();
  d /= static_cast<double>(idx.size());
  const double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

// Essential matrix from >= 8 normalized correspondences, xb^T E xa = 0.
bool eight_point(const std::vector<Vec2>& xa, const std::vector<Vec2>& xb, std::span<const int> idx, Mat3& e) {
  const Mat3 ta = hartley(xa, idx);
  const Mat3 tb = hartley(xb, idx);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(std::max<std::size_t>(idx.size(), 9)), 9);
  a.setZero();
  Eigen::Index row = 0;
  for (int i : idx) {
    const Vec3 pa = ta * xa[static_cast<std::size_t>(i)].homogeneous();
    const Vec3 pb = tb * xb[static_cast<std::size_t>(i)].homogeneous();
    a.row(row++) << pb.x() * pa.x(), pb.x() * pa.y(), pb.x(), pb.y() * pa.x(), pb.y() * pa.y(),
        pb.y(), pa.x(), pa.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Mat3 en;
  en << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Eigen::JacobiSVD<Mat3> s2(en, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double m = 0.5 * (s2.singularValues()(0) + s2.singularValues()(1));
  en = s2.matrixU() * Eigen::Vector3d(m, m, 0.0).asDiagonal() * s2.matrixV().transpose();
  e = tb.transpose() * en * ta;
  if (!e.allFinite() || e.norm() == 0.0) return false;
  e /= e.norm();
  return true;
}

// Squared Sampson distance in pixels for F = K^-T E K^-1.
double sampson(const Mat3& f, const Vec2& pa, const Vec2& pb) {
  const Vec3 a = pa.homogeneous();
  const Vec3 b = pb.homogeneous();
  const Vec3 fa = f * a;
  const Vec3 fb = f.transpose() * b;
  const double num = b.dot(fa);
  const double den = fa.x() * fa.x() + fa.y() * fa.y() + fb.x() * fb.x() + fb.y() * fb.y();
  return den > 0.0 ? num * num / den : kInf;
}

int count_inliers(const Mat3& f, const std::vector<Vec2>& pa, const std::vector<Vec2>& pb, double thr2,
                  std::vector<char>* mask) {
  int n = 0;
  if (mask) mask->assign(pa.size(), 0);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (sampson(f, pa[i], pb[i]) < thr2) {
      ++n;
      if (mask) (*mask)[i] = 1;
    }
  }
  return n;
}

void sample_distinct(Rng& rng, int n, int count, std::vector<int>& out) {
  out.clear();
  while (static_cast<int>(out.size()) < count) {
    const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
}

Mat3 kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::span<const int> idx) {
  Mat3 h = Mat3::Zero();
  for (int i : idx) h += b[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)].transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

// Largest fraction of matches explained by a pure rotation (no parallax).
double rotation_support(const std::vector<Vec2>& pa, const std::vector<Vec2>& pb, const CameraIntrinsics& k,
                        double thr, Rng& rng, int iterations) {
  const int n = static_cast<int>(pa.size());
  std::vector<Vec3> ba(pa.size());
  std::vector<Vec3> bb(pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ba[i] = geom::unproject(k, pa[i]).normalized();
    bb[i] = geom::unproject(k, pb[i]).normalized();
  }
  int best = 0;
  std::vector<int> sample;
  for (int it = 0; it < iterations; ++it) {
    sample_distinct(rng, n, 3, sample);
    const Mat3 r = kabsch(ba, bb, sample);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      Vec2 px;
      if (project_checked(k, r * ba[static_cast<std::size_t>(i)], px) &&
          (px - pb[static_cast<std::size_t>(i)]).norm() < thr) {
        ++count;
      }
    }
    best = std::max(best, count);
  }
  return static_cast<double>(best) / n;
}

}  // namespace

Initialization initialize(const Frame& frame_a, const Frame& frame_b, const CameraIntrinsics& k,
                          const OdometryConfig& cfg) {
  const auto ms = features::match(frame_a.descriptors, frame_b.descriptors, cfg.max_descriptor_distance,
                                  std::min(cfg.match_ratio, 0.999));
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(ms.size());
  for (const auto& m : ms) pairs.emplace_back(m.index_a, m.index_b);
  return initialize(frame_a, frame_b, pairs, k, cfg);
}

Initialization initialize(const Frame& frame_a, const Frame& frame_b,
                          std::span<const std::pair<int, int>> matches, const CameraIntrinsics& k,
                          const OdometryConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(matches.size()) < std::max(cfg.min_init_matches, 8)) {
    throw Error(ErrorCode::InsufficientMatches, "too few matches to initialize");
  }
  const int n = static_cast<int>(matches.size());
  std::vector<Vec2> pa(matches.size());
  std::vector<Vec2> pb(matches.size());
  std::vector<Vec2> xa(matches.size());
  std::vector<Vec2> xb(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    pa[i] = frame_a.keypoints.at(static_cast<std::size_t>(matches[i].first)).position();
    pb[i] = frame_b.keypoints.at(static_cast<std::size_t>(matches[i].second)).position();
    xa[i] = geom::unproject(k, pa[i]).head<2>();
    xb[i] = geom::unproject(k, pb[i]).head<2>();
  }
  const Mat3 kinv = k.matrix().inverse();
  const double thr2 = cfg.ransac_threshold * cfg.ransac_threshold;

  Rng rng(cfg.seed);
  std::vector<int> sample;
  Mat3 best_e = Mat3::Zero();
  int best = -1;
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    sample_distinct(rng, n, 8, sample);
    Mat3 e;
    if (!eight_point(xa, xb, sample, e)) continue;
    const int c = count_inliers(kinv.transpose() * e * kinv, pa, pb, thr2, nullptr);
    if (c > best) {
      best = c;
      best_e = e;
    }
  }
  std::vector<char> mask;
  if (best > 0) {
    count_inliers(kinv.transpose() * best_e * kinv, pa, pb, thr2, &mask);
    std::vector<int> in;
    for (int i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) in.push_back(i);
    }
    Mat3 refined;
    if (in.size() >= 8 && eight_point(xa, xb, in, refined)) {
      std::vector<char> mask2;
      const int c = count_inliers(kinv.transpose() * refined * kinv, pa, pb, thr2, &mask2);
      if (c >= best) {
        best = c;
        best_e = refined;
        mask = std::move(mask2);
      }
    }
  }
  const double ratio = best > 0 ? static_cast<double>(best) / n : 0.0;
  const double rot = rotation_support(pa, pb, k, cfg.ransac_threshold, rng, 100);
  if (rot >= std::max(0.9 * ratio, cfg.min_init_inlier_ratio)) {
    throw Error(ErrorCode::InsufficientParallax, "matches are explained by a pure rotation");
  }
  if (ratio < cfg.min_init_inlier_ratio) {
    throw Error(ErrorCode::DegenerateMotion, "essential matrix inlier ratio below threshold");
  }

  // Four-fold decomposition, resolved by cheirality.
  Eigen::JacobiSVD<Mat3> svd(best_e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 rots[2] = {u * w * v.transpose(), u * w.transpose() * v.transpose()};
  const Vec3 t = u.col(2);
  const RigidTransform ident = RigidTransform::identity();
  RigidTransform best_pose;
  int best_front = -1;
  for (const Mat3& r : rots) {
    for (double sign : {1.0, -1.0}) {
      const RigidTransform cand{geom::Rotation::from_matrix(r), sign * t};
      int front = 0;
      for (int i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        Vec3 x;
        if (!dlt(ident, cand, xa[static_cast<std::size_t>(i)].homogeneous(), xb[static_cast<std::size_t>(i)].homogeneous(), x)) continue;
        if (x.z() > 0 && geom::apply(cand, x).z() > 0) ++front;
      }
      if (front > best_front) {
        best_front = front;
        best_pose = cand;
      }
    }
  }

  std::vector<double> angles;
  std::vector<std::pair<int, Vec3>> accepted;
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    Vec3 x;
    if (!dlt(ident, best_pose, xa[static_cast<std::size_t>(i)].homogeneous(), xb[static_cast<std::size_t>(i)].homogeneous(), x)) continue;
    Vec2 ra;
    Vec2 rb;
    if (!project_checked(k, x, ra) || !project_checked(k, geom::apply(best_pose, x), rb)) continue;
    if ((ra - pa[static_cast<std::size_t>(i)]).norm() > cfg.triangulation_max_error ||
        (rb - pb[static_cast<std::size_t>(i)]).norm() > cfg.triangulation_max_error) {
      continue;
    }
    const double ang = triangulation_angle(ident, best_pose, x);
    angles.push_back(ang);
    if (ang >= deg2rad(cfg.min_parallax_deg)) accepted.emplace_back(i, x);
  }
  const double med = median(angles);
  if (angles.empty() || med < deg2rad(cfg.min_parallax_deg)) {
    throw Error(ErrorCode::InsufficientParallax, "median triangulation angle below threshold");
  }
  if (static_cast<int>(accepted.size()) < 2 * cfg.min_inliers) {
    throw Error(ErrorCode::InsufficientParallax, "too few points with enough parallax");
  }

  std::vector<double> depths;
  depths.reserve(accepted.size());
  for (const auto& [i, x] : accepted) depths.push_back(x.z());
  const double s = 1.0 / median(depths);

  Initialization out;
  out.pose_b = {best_pose.rotation, best_pose.translation * s};
  out.inliers = best;
  out.median_parallax_deg = med / kDegToRad;
  const int ka = out.map.add_keyframe(frame_a, ident);
  const int kb = out.map.add_keyframe(frame_b, out.pose_b);
  for (const auto& [i, x] : accepted) {
    const auto& m = matches[static_cast<std::size_t>(i)];
    const int pid = out.map.add_point(x * s, frame_a.descriptors.at(static_cast<std::size_t>(m.first)));
    out.map.add_observation(pid, ka, m.first);
    out.map.add_observation(pid, kb, m.second);
    out.map.update_descriptor(pid);
  }

  // Two-view refinement with keyframe 0 fixed, then restore unit median depth.
  const int window[] = {kb};
  BundleAdjustOptions keep;
  keep.cull = false;
  local_bundle_adjust(out.map, window, k, cfg, keep);
  depths.clear();
  for (const auto& [id, p] : out.map.points()) depths.push_back(p.position.z());
  const double rs = 1.0 / median(depths);
  for (auto& [id, p] : out.map.points()) p.position *= rs;
  auto& kf = out.map.keyframe(kb);
  kf.pose.translation *= rs;
  out.pose_b = kf.pose;
  return out;
}

// ---------------------------------------------------------------------------
// Local bundle adjustment

namespace {

struct BaObservation {
  int pose = -1;  // free pose block, -1 when fixed
  int keyframe = 0;
  Vec2 pixel;
};

struct BaPoint {
  int id = 0;
  std::vector<BaObservation> obs;
};

struct BaState {
  std::vector<RigidTransform> poses;  // indexed by keyframe id
  std::vector<Vec3> points;           // indexed like BaPoint list
};

double ba_cost(const BaState& s, const std::vector<BaPoint>& pts, const CameraIntrinsics& k, double delta) {
  double cost = 0.0;
  for (std::size_t l = 0; l < pts.size(); ++l) {
    for (const auto& o : pts[l].obs) {
      Vec2 px;
      if (!project_checked(k, geom::apply(s.poses[static_cast<std::size_t>(o.keyframe)], s.points[l]), px)) {
        return kInf;
      }
      cost += geom::huber_cost((px - o.pixel).squaredNorm(), delta);
    }
  }
  return cost;
}

}  // namespace

BundleAdjustReport local_bundle_adjust(SparseMap& map, std::span<const int> window, const CameraIntrinsics& k,
                                       const OdometryConfig& cfg, const BundleAdjustOptions& options) {
  if (window.empty()) throw Error(ErrorCode::InvalidArgument, "bundle adjustment window is empty");
  const int nkf = static_cast<int>(map.keyframes().size());
  std::vector<int> block(static_cast<std::size_t>(nkf), -1);
  std::vector<int> free_ids;
  for (int id : window) {
    if (id < 0 || id >= nkf) throw Error(ErrorCode::InvalidArgument, "window references a missing keyframe");
    if (id != 0 && block[static_cast<std::size_t>(id)] < 0) {
      block[static_cast<std::size_t>(id)] = static_cast<int>(free_ids.size());
      free_ids.push_back(id);
    }
  }
  std::set<int> point_set;
  for (int id : window) {
    for (int pid : map.keyframe(id).point_ids) {
      if (pid >= 0) point_set.insert(pid);
    }
  }

  BaState state;
  state.poses.reserve(static_cast<std::size_t>(nkf));
  for (const auto& kf : map.keyframes()) state.poses.push_back(kf.pose);
  std::vector<BaPoint> pts;
  for (int pid : point_set) {
    const MapPoint& p = *map.point(pid);
    BaPoint bp;
    bp.id = pid;
    for (const auto& o : p.observations) {
      const Keyframe& kf = map.keyframe(o.keyframe);
      if (geom::apply(kf.pose, p.position).z() <= kMinDepth) continue;
      bp.obs.push_back({block[static_cast<std::size_t>(o.keyframe)], o.keyframe,
                        kf.keypoints[static_cast<std::size_t>(o.keypoint)].position()});
    }
    if (bp.obs.empty()) continue;
    pts.push_back(std::move(bp));
    state.points.push_back(p.position);
  }

  BundleAdjustReport rep;
  const int np = static_cast<int>(free_ids.size());
  const double delta = cfg.huber_delta;
  double cost = ba_cost(state, pts, k, delta);
  rep.initial_cost = cost;
  double lambda = 1e-4;
  bool accepted_any = false;
  bool done = pts.empty();

  for (int it = 0; it < cfg.ba_iterations && !done; ++it) {
    rep.iterations = it + 1;
    Eigen::MatrixXd hpp = Eigen::MatrixXd::Zero(6 * np, 6 * np);
    Eigen::VectorXd bp = Eigen::VectorXd::Zero(6 * np);
    std::vector<Mat3> hll(pts.size(), Mat3::Zero());
    std::vector<Vec3> bl(pts.size(), Vec3::Zero());
    std::vector<std::vector<Mat63>> hpl(pts.size());
    double gnorm2 = 0.0;
    for (std::size_t l = 0; l < pts.size(); ++l) {
      hpl[l].assign(pts[l].obs.size(), Mat63::Zero());
      for (std::size_t o = 0; o < pts[l].obs.size(); ++o) {
        const auto& ob = pts[l].obs[o];
        const ReprojectionJacobians j =
            reprojection_jacobians(state.poses[static_cast<std::size_t>(ob.keyframe)], state.points[l], k);
        const Vec2 r = j.projection - ob.pixel;
        const double w = geom::huber_weight(r.norm(), delta);
        hll[l].noalias() += w * j.d_point.transpose() * j.d_point;
        bl[l].noalias() -= w * j.d_point.transpose() * r;
        if (ob.pose >= 0) {
          const int b = 6 * ob.pose;
          hpp.block<6, 6>(b, b).noalias() += w * j.d_pose.transpose() * j.d_pose;
          bp.segment<6>(b).noalias() -= w * j.d_pose.transpose() * r;
          hpl[l][o] = w * j.d_pose.transpose() * j.d_point;
        }
      }
      gnorm2 += bl[l].squaredNorm();
    }
    gnorm2 += bp.squaredNorm();
    if (gnorm2 == 0.0) break;

    bool stepped = false;
    while (!stepped) {
      // Schur complement on the point blocks.
      Eigen::MatrixXd s = hpp;
      for (int i = 0; i < 6 * np; ++i) s(i, i) += lambda * std::max(hpp(i, i), 1e-12);
      Eigen::VectorXd rhs = bp;
      std::vector<Mat3> hinv(pts.size());
      for (std::size_t l = 0; l < pts.size(); ++l) {
        hinv[l] = marquardt<3>(hll[l], lambda).inverse();
        const auto& obs = pts[l].obs;
        for (std::size_t a = 0; a < obs.size(); ++a) {
          if (obs[a].pose < 0) continue;
          const Mat63 wa = hpl[l][a] * hinv[l];
          rhs.segment<6>(6 * obs[a].pose).noalias() -= wa * bl[l];
          for (std::size_t b = 0; b < obs.size(); ++b) {
            if (obs[b].pose < 0) continue;
            s.block<6, 6>(6 * obs[a].pose, 6 * obs[b].pose).noalias() -= wa * hpl[l][b].transpose();
          }
        }
      }
      Eigen::VectorXd dp = np > 0 ? Eigen::VectorXd(s.ldlt().solve(rhs)) : Eigen::VectorXd();
      std::vector<Vec3> dl(pts.size());
      double step2 = dp.squaredNorm();
      for (std::size_t l = 0; l < pts.size(); ++l) {
        Vec3 r = bl[l];
        const auto& obs = pts[l].obs;
        for (std::size_t a = 0; a < obs.size(); ++a) {
          if (obs[a].pose >= 0) r.noalias() -= hpl[l][a].transpose() * dp.segment<6>(6 * obs[a].pose);
        }
        dl[l] = hinv[l] * r;
        step2 += dl[l].squaredNorm();
      }
      if (!std::isfinite(step2)) throw Error(ErrorCode::Diverged, "singular bundle adjustment system");
      if (std::sqrt(step2) < cfg.lm_epsilon) {
        done = true;
        break;
      }
      BaState cand = state;
      for (int b = 0; b < np; ++b) {
        auto& pose = cand.poses[static_cast<std::size_t>(free_ids[static_cast<std::size_t>(b)])];
        pose = geom::compose(geom::se3_exp(dp.segment<6>(6 * b)), pose);
      }
      for (std::size_t l = 0; l < pts.size(); ++l) cand.points[l] += dl[l];
      const double c = ba_cost(cand, pts, k, delta);
      if (c < cost) {
        state = std::move(cand);
        cost = c;
        rep.cost_history.push_back(c);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted_any = true;
        stepped = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e8) {
          if (!accepted_any) throw Error(ErrorCode::Diverged, "damping exceeded 1e8 without cost reduction");
          done = true;
          break;
        }
      }
    }
  }
  rep.final_cost = cost;

  for (int id : free_ids) map.keyframe(id).pose = state.poses[static_cast<std::size_t>(id)];
  for (std::size_t l = 0; l < pts.size(); ++l) map.point(pts[l].id)->position = state.points[l];

  double err_sum = 0.0;
  int err_n = 0;
  for (int pid : point_set) {
    MapPoint* p = map.point(pid);
    if (p == nullptr) continue;
    std::vector<int> drop;
    for (const auto& o : p->observations) {
      const Keyframe& kf = map.keyframe(o.keyframe);
      Vec2 px;
      const bool ok = project_checked(k, geom::apply(kf.pose, p->position), px);
      const double e = ok ? (px - kf.keypoints[static_cast<std::size_t>(o.keypoint)].position()).norm() : kInf;
      if (options.cull && e > cfg.outlier_threshold) {
        drop.push_back(o.keyframe);
      }
    }
    for (int kf : drop) map.remove_observation(pid, kf);
    rep.culled_observations += static_cast<int>(drop.size());
    if (options.cull && p->observations.size() < 2) {
      map.remove_point(pid);
      ++rep.removed_points;
      continue;
    }
    if (!drop.empty()) map.update_descriptor(pid);
    for (const auto& o : p->observations) {
      const Keyframe& kf = map.keyframe(o.keyframe);
      Vec2 px;
      if (project_checked(k, geom::apply(kf.pose, p->position), px)) {
        err_sum += (px - kf.keypoints[static_cast<std::size_t>(o.keypoint)].position()).norm();
        ++err_n;
      }
    }
  }
  rep.mean_error = err_n > 0 ? err_sum / err_n : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Keyframe policy

bool should_insert_keyframe(double tracked_ratio, int frames_since_keyframe, const OdometryConfig& cfg) {
  return tracked_ratio < cfg.keyframe_ratio || frames_since_keyframe >= cfg.keyframe_max_gap;
}

bool should_insert_keyframe(const TrackResult& track, const SparseMap& map, int reference_keyframe,
                            int frames_since_keyframe, const OdometryConfig& cfg) {
  const int ref = map.tracked_points(reference_keyframe);
  const double ratio = ref > 0 ? static_cast<double>(track.inliers) / ref : 0.0;
  return should_insert_keyframe(ratio, frames_since_keyframe, cfg);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct CandidateTrack {
  int anchor_kf = 0;
  int anchor_kp = 0;
  Vec2 px = Vec2::Zero();
  BinaryDescriptor desc;
  int kp = -1;  // keypoint in the most recent frame
};

struct InitTrack {
  int ref_kp = 0;
  Vec2 px = Vec2::Zero();
  Vec2 motion = Vec2::Zero();
  BinaryDescriptor desc;
  int kp = 0;
};

struct FramePose {
  std::size_t frame = 0;
  int keyframe = 0;
  RigidTransform relative;  // frame pose * keyframe pose^-1
};

class Pipeline {
 public:
  Pipeline(const FrameSequence& video, const CameraIntrinsics& k, const OdometryConfig& cfg)
      : video_(video), k_(k), cfg_(cfg) {}

  OdometryResult run();

 private:
  Frame extract(std::size_t i) const { return extract_frame(video_.frames[i], video_.timestamp(i), cfg_); }
  features::WindowMatchParams window(double radius) const {
    return {radius, cfg_.max_descriptor_distance, cfg_.match_ratio};
  }

  std::size_t initialize_map();
  std::vector<int> local_points() const;
  TrackResult track(const Frame& f, const features::KeypointGrid& grid, const RigidTransform& pred,
                    std::vector<std::pair<int, int>>& matched) const;
  void advance_tracks(const Frame& f, const features::KeypointGrid& grid, const RigidTransform& prev,
                      const RigidTransform& cur, const std::vector<std::pair<int, int>>& matched);
  int insert_keyframe(const Frame& f, const RigidTransform& pose, const std::vector<std::pair<int, int>>& matched);
  void seed_tracks(int kf);

  const FrameSequence& video_;
  CameraIntrinsics k_;
  OdometryConfig cfg_;
  SparseMap map_;
  std::vector<FramePose> poses_;
  std::vector<CandidateTrack> tracks_;
  RigidTransform velocity_;
  int reference_frame_ = 0;
  int initialized_at_ = -1;
};

std::size_t Pipeline::initialize_map() {
  const std::size_t n = video_.frames.size();
  Frame ref = extract(0);
  std::size_t ref_index = 0;
  auto reset = [&](Frame&& f, std::size_t index) {
    ref = std::move(f);
    ref_index = index;
  };
  std::vector<InitTrack> tracks;
  auto seed = [&]() {
    tracks.clear();
    for (std::size_t i = 0; i < ref.keypoints.size(); ++i) {
      tracks.push_back({static_cast<int>(i), ref.keypoints[i].position(), Vec2::Zero(), ref.descriptors[i],
                        static_cast<int>(i)});
    }
  };
  seed();
  const std::size_t limit = std::min(n, static_cast<std::size_t>(cfg_.init_frame_limit));
  for (std::size_t i = 1; i < limit; ++i) {
    Frame cur = extract(i);
    const features::KeypointGrid grid(cur.keypoints, cur.width, cur.height);
    std::vector<BinaryDescriptor> qd;
    std::vector<Vec2> qp;
    for (const auto& t : tracks) {
      qd.push_back(t.desc);
      qp.push_back(t.px + t.motion);
    }
    const auto idx = features::match_in_windows(qd, qp, cur.keypoints, cur.descriptors, grid,
                                                window(cfg_.track_radius));
    std::vector<InitTrack> kept;
    for (std::size_t q = 0; q < tracks.size(); ++q) {
      if (idx[q] < 0) continue;
      InitTrack t = tracks[q];
      const Vec2 px = cur.keypoints[static_cast<std::size_t>(idx[q])].position();
      t.motion = px - t.px;
      t.px = px;
      t.desc = cur.descriptors[static_cast<std::size_t>(idx[q])];
      t.kp = idx[q];
      kept.push_back(t);
    }
    tracks = std::move(kept);
    if (static_cast<int>(tracks.size()) < cfg_.min_init_matches) {
      reset(std::move(cur), i);
      seed();
      continue;
    }
    std::vector<std::pair<int, int>> pairs;
    for (const auto& t : tracks) pairs.emplace_back(t.ref_kp, t.kp);
    try {
      Initialization init = initialize(ref, cur, pairs, k_, cfg_);
      map_ = std::move(init.map);
      const int frames = static_cast<int>(i - ref_index);
      velocity_ = geom::se3_exp(geom::se3_log(init.pose_b) / frames);
      poses_.push_back({ref_index, 0, RigidTransform::identity()});
      const std::vector<int> win = {0, 1};
      local_bundle_adjust(map_, win, k_, cfg_);
      poses_.push_back({i, 1, RigidTransform::identity()});
      reference_frame_ = static_cast<int>(ref_index);
      initialized_at_ = static_cast<int>(i);
      return i;
    } catch (const Error& e) {
      const auto c = e.code();
      if (c != ErrorCode::InsufficientParallax && c != ErrorCode::DegenerateMotion &&
          c != ErrorCode::InsufficientMatches && c != ErrorCode::Diverged) {
        throw;
      }
    }
  }
  throw Error(ErrorCode::InitializationFailed, "no frame pair initialized within the first " +
                                                   std::to_string(cfg_.init_frame_limit) + " frames");
}

std::vector<int> Pipeline::local_points() const {
  std::set<int> ids;
  const int nkf = static_cast<int>(map_.keyframes().size());
  for (int id = std::max(0, nkf - cfg_.ba_window); id < nkf; ++id) {
    for (int pid : map_.keyframe(id).point_ids) {
      if (pid >= 0) ids.insert(pid);
    }
  }
  return {ids.begin(), ids.end()};
}

TrackResult Pipeline::track(const Frame& f, const features::KeypointGrid& grid, const RigidTransform& pred,
                            std::vector<std::pair<int, int>>& matched) const {
  const std::vector<int> local = local_points();
  TrackResult lost;
  lost.pose = pred;
  matched.clear();

  auto associate = [&](const RigidTransform& pose, double radius, std::vector<int>& pids,
                       std::vector<Correspondence>& corr, std::vector<int>& kps) {
    pids.clear();
    corr.clear();
    kps.clear();
    std::vector<BinaryDescriptor> qd;
    std::vector<Vec2> qp;
    std::vector<Vec3> xs;
    for (int pid : local) {
      const MapPoint& p = *map_.point(pid);
      Vec2 px;
      if (!project_checked(k_, geom::apply(pose, p.position), px) || !k_.contains(px, -radius)) continue;
      pids.push_back(pid);
      qd.push_back(p.descriptor);
      qp.push_back(px);
      xs.push_back(p.position);
    }
    const auto idx = features::match_in_windows(qd, qp, f.keypoints, f.descriptors, grid, window(radius));
    std::vector<int> keep;
    for (std::size_t q = 0; q < idx.size(); ++q) {
      if (idx[q] < 0) continue;
      keep.push_back(pids[q]);
      corr.push_back({xs[q], f.keypoints[static_cast<std::size_t>(idx[q])].position()});
      kps.push_back(idx[q]);
    }
    pids = std::move(keep);
  };

  std::vector<int> pids;
  std::vector<Correspondence> corr;
  std::vector<int> kps;
  associate(pred, cfg_.track_radius, pids, corr, kps);
  if (static_cast<int>(corr.size()) < cfg_.min_inliers) {
    associate(pred, 2.0 * cfg_.track_radius, pids, corr, kps);
  }
  if (static_cast<int>(corr.size()) < cfg_.min_inliers) return lost;
  TrackResult first;
  try {
    first = optimize_pose(pred, corr, k_, cfg_);
  } catch (const Error&) {
    return lost;
  }
  if (first.status != TrackStatus::Ok) return lost;

  associate(first.pose, cfg_.refine_radius, pids, corr, kps);
  TrackResult second;
  try {
    if (static_cast<int>(corr.size()) >= cfg_.min_inliers) second = optimize_pose(first.pose, corr, k_, cfg_);
  } catch (const Error&) {
    second.status = TrackStatus::Lost;
  }
  if (second.status != TrackStatus::Ok || second.inliers < first.inliers) {
    // Fall back to the first pass, re-associated at its pose.
    associate(first.pose, cfg_.track_radius, pids, corr, kps);
    second = optimize_pose(first.pose, corr, k_, cfg_);
    if (second.status != TrackStatus::Ok) return lost;
  }
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!second.outlier[i]) matched.emplace_back(pids[i], kps[i]);
  }
  return second;
}

void Pipeline::advance_tracks(const Frame& f, const features::KeypointGrid& grid, const RigidTransform& prev,
                              const RigidTransform& cur, const std::vector<std::pair<int, int>>& matched) {
  const Mat3 rrel = cur.rotation.matrix() * prev.rotation.matrix().transpose();
  std::vector<char> eligible(f.keypoints.size(), 1);
  for (const auto& m : matched) eligible[static_cast<std::size_t>(m.second)] = 0;
  std::vector<BinaryDescriptor> qd;
  std::vector<Vec2> qp;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    Vec2 px;
    if (!project_checked(k_, rrel * geom::unproject(k_, tracks_[i].px), px)) continue;
    qd.push_back(tracks_[i].desc);
    qp.push_back(px);
    which.push_back(i);
  }
  const auto idx = features::match_in_windows(qd, qp, f.keypoints, f.descriptors, grid,
                                              window(cfg_.track_radius), eligible);
  std::vector<CandidateTrack> kept;
  for (std::size_t q = 0; q < which.size(); ++q) {
    if (idx[q] < 0) continue;
    CandidateTrack t = tracks_[which[q]];
    t.kp = idx[q];
    t.px = f.keypoints[static_cast<std::size_t>(idx[q])].position();
    t.desc = f.descriptors[static_cast<std::size_t>(idx[q])];
    kept.push_back(t);
  }
  tracks_ = std::move(kept);
}

void Pipeline::seed_tracks(int kf_id) {
  const Keyframe& kf = map_.keyframe(kf_id);
  std::vector<char> used(kf.keypoints.size(), 0);
  for (const auto& t : tracks_) {
    if (t.kp >= 0) used[static_cast<std::size_t>(t.kp)] = 1;
  }
  for (std::size_t i = 0; i < kf.keypoints.size(); ++i) {
    if (kf.point_ids[i] >= 0 || used[i]) continue;
    tracks_.push_back({kf_id, static_cast<int>(i), kf.keypoints[i].position(), kf.descriptors[i],
                       static_cast<int>(i)});
  }
}

int Pipeline::insert_keyframe(const Frame& f, const RigidTransform& pose,
                              const std::vector<std::pair<int, int>>& matched) {
  const int kf = map_.add_keyframe(f, pose);
  for (const auto& [pid, kp] : matched) map_.add_observation(pid, kf, kp);

  const TriangulationOptions topt{cfg_.triangulation_max_error, cfg_.min_parallax_deg};
  std::vector<CandidateTrack> kept;
  for (const auto& t : tracks_) {
    if (map_.keyframe(kf).point_ids[static_cast<std::size_t>(t.kp)] >= 0) continue;
    const Keyframe& anchor = map_.keyframe(t.anchor_kf);
    if (anchor.point_ids[static_cast<std::size_t>(t.anchor_kp)] >= 0) continue;
    try {
      const Vec3 x = triangulate(anchor.pose, pose, anchor.keypoints[static_cast<std::size_t>(t.anchor_kp)].position(),
                                 f.keypoints[static_cast<std::size_t>(t.kp)].position(), k_, topt);
      const int pid = map_.add_point(x, anchor.descriptors[static_cast<std::size_t>(t.anchor_kp)]);
      map_.add_observation(pid, t.anchor_kf, t.anchor_kp);
      map_.add_observation(pid, kf, t.kp);
      map_.update_descriptor(pid);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::LowParallax) kept.push_back(t);
    }
  }
  tracks_ = std::move(kept);
  seed_tracks(kf);

  std::vector<int> win;
  for (int id = std::max(0, kf + 1 - cfg_.ba_window); id <= kf; ++id) win.push_back(id);
  local_bundle_adjust(map_, win, k_, cfg_);
  return kf;
}

OdometryResult Pipeline::run() {
  const std::size_t n = video_.frames.size();
  const std::size_t start = initialize_map();
  seed_tracks(1);

  OdometryResult res;
  res.reference_frame = reference_frame_;
  res.initialized_at = initialized_at_;
  RigidTransform last = map_.keyframe(1).pose;
  int ref_kf = 1;
  int since_kf = 0;
  int lost = 0;
  std::vector<std::pair<int, int>> matched;
  for (std::size_t i = start + 1; i < n; ++i) {
    const Frame f = extract(i);
    const features::KeypointGrid grid(f.keypoints, f.width, f.height);
    const RigidTransform pred = geom::compose(velocity_, last);
    const TrackResult tr = track(f, grid, pred, matched);
    if (tr.status != TrackStatus::Ok) {
      if (++lost > cfg_.max_lost_frames) {
        res.partial = true;
        break;
      }
      advance_tracks(f, grid, last, pred, {});
      last = pred;
      continue;
    }
    lost = 0;
    advance_tracks(f, grid, last, tr.pose, matched);
    velocity_ = geom::compose(tr.pose, geom::invert(last));
    ++since_kf;
    if (should_insert_keyframe(tr, map_, ref_kf, since_kf, cfg_)) {
      ref_kf = insert_keyframe(f, tr.pose, matched);
      since_kf = 0;
      last = map_.keyframe(ref_kf).pose;
      poses_.push_back({i, ref_kf, RigidTransform::identity()});
    } else {
      last = tr.pose;
      poses_.push_back({i, ref_kf, geom::compose(tr.pose, geom::invert(map_.keyframe(ref_kf).pose))});
    }
  }

  for (const auto& fp : poses_) {
    const RigidTransform world_to_cam = geom::compose(fp.relative, map_.keyframe(fp.keyframe).pose);
    res.trajectory.push_back(video_.timestamp(fp.frame), geom::invert(world_to_cam));
  }
  res.state_actions = traj::state_action_pairs(res.trajectory);
  res.keyframes = map_.keyframes().size();
  res.map_points = map_.points().size();
  return res;
}

}  // namespace

OdometryResult run(const FrameSequence& video, const CameraIntrinsics& k, const OdometryConfig& cfg) {
  if (video.frames.size() < 2) throw Error(ErrorCode::InvalidArgument, "odometry needs at least two frames");
  cfg.validate();
  k.validate();
  Pipeline p(video, k, cfg);
  return p.run();
}

}  // namespace skyloop::vo
