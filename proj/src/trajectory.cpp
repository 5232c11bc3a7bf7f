#include "skyloop/trajectory.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace skyloop::traj {

Trajectory::Trajectory(std::vector<TrajectorySample> samples, std::string frame_id)
    : frame_id_(std::move(frame_id)) {
  samples_.reserve(samples.size());
  for (const auto& s : samples) push_back(s);
}

void Trajectory::push_back(const TrajectorySample& s) {
  if (!samples_.empty() && !(s.timestamp > samples_.back().timestamp)) {
    throw Error(ErrorCode::InvalidArgument, "trajectory timestamps must be strictly increasing");
  }
  samples_.push_back(s);
}

double Trajectory::path_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    len += (samples_[i].pose.translation - samples_[i - 1].pose.translation).norm();
  }
  return len;
}

std::vector<Vec3> Trajectory::positions() const {
  std::vector<Vec3> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.pose.translation);
  return out;
}

RigidTransform Trajectory::interpolate(double t) const {
  if (samples_.empty()) throw Error(ErrorCode::InvalidArgument, "empty trajectory");
  if (t <= samples_.front().timestamp) return samples_.front().pose;
  if (t >= samples_.back().timestamp) return samples_.back().pose;
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                   [](double v, const TrajectorySample& s) { return v < s.timestamp; });
  const TrajectorySample& b = *it;
  const TrajectorySample& a = *(it - 1);
  const double u = (t - a.timestamp) / (b.timestamp - a.timestamp);
  const Eigen::Quaterniond q =
      a.pose.rotation.quaternion().slerp(u, b.pose.rotation.quaternion());
  return {Rotation(q), (1.0 - u) * a.pose.translation + u * b.pose.translation};
}

IndexPairs associate(const Trajectory& est, const Trajectory& ref, double max_dt) {
  if (!(max_dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_dt must be positive");
  struct Candidate {
    double dt;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Candidate> cands;
  const auto& r = ref.samples();
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    auto lo = std::lower_bound(r.begin(), r.end(), t - max_dt,
                               [](const TrajectorySample& s, double v) { return s.timestamp < v; });
    for (auto it = lo; it != r.end() && it->timestamp <= t + max_dt; ++it) {
      cands.push_back({std::abs(it->timestamp - t), i, static_cast<std::size_t>(it - r.begin())});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dt != b.dt) return a.dt < b.dt;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<char> used_e(est.size(), 0);
  std::vector<char> used_r(ref.size(), 0);
  IndexPairs out;
  for (const auto& c : cands) {
    if (used_e[c.i] || used_r[c.j]) continue;
    used_e[c.i] = used_r[c.j] = 1;
    out.emplace_back(c.i, c.j);
  }
  if (out.empty()) throw Error(ErrorCode::NoAssociations, "no timestamps within max_dt");
  std::sort(out.begin(), out.end());
  return out;
}

geom::SimilarityTransform umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                                  bool with_scale) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::InvalidArgument, "point sets differ in size");
  }
  const std::size_t n = src.size();
  if (n < 3) throw Error(ErrorCode::TooFewAssociations, "need at least 3 point pairs");
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= static_cast<double>(n);
  mu_d /= static_cast<double>(n);
  geom::Mat3 cov = geom::Mat3::Zero();
  geom::Mat3 scatter_s = geom::Mat3::Zero();
  geom::Mat3 scatter_d = geom::Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s = src[i] - mu_s;
    const Vec3 d = dst[i] - mu_d;
    cov += d * s.transpose();
    scatter_s += s * s.transpose();
    scatter_d += d * d.transpose();
    var_s += s.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_s /= static_cast<double>(n);

  for (const geom::Mat3* scatter : {&scatter_s, &scatter_d}) {
    const Eigen::JacobiSVD<geom::Mat3> sv(*scatter);
    const auto sigma = sv.singularValues().cwiseSqrt();
    if (!(sigma(0) > 0.0) || sigma(1) <= 1e-6 * sigma(0)) {
      throw Error(ErrorCode::DegenerateGeometry, "associated positions are collinear");
    }
  }

  const Eigen::JacobiSVD<geom::Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  geom::Mat3 s = geom::Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const geom::Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale =
      with_scale ? (svd.singularValues().asDiagonal() * s).trace() / var_s : 1.0;
  const Vec3 t = mu_d - scale * r * mu_s;
  return {scale, Rotation::from_matrix(r), t};
}

namespace {

IndexPairs associate_for_alignment(const Trajectory& estimated, const Trajectory& reference) {
  if (reference.size() < 2 || estimated.empty()) {
    throw Error(ErrorCode::TooFewAssociations, "trajectories too short to align");
  }
  std::vector<double> periods;
  for (std::size_t i = 1; i < reference.size(); ++i) {
    periods.push_back(reference[i].timestamp - reference[i - 1].timestamp);
  }
  std::nth_element(periods.begin(), periods.begin() + periods.size() / 2, periods.end());
  const double max_dt = 0.5 * periods[periods.size() / 2];
  try {
    return associate(estimated, reference, max_dt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoAssociations) {
      throw Error(ErrorCode::TooFewAssociations, "no associated timestamps");
    }
    throw;
  }
}

double alignment_rmse(const Trajectory& estimated, const Trajectory& reference, const IndexPairs& pairs,
                      const geom::SimilarityTransform& t) {
  double sse = 0.0;
  for (const auto& [i, j] : pairs) {
    sse += (t.apply(estimated[i].pose.translation) - reference[j].pose.translation).squaredNorm();
  }
  return std::sqrt(sse / static_cast<double>(pairs.size()));
}

}  // namespace

Alignment align_umeyama(const Trajectory& estimated, const Trajectory& reference, bool with_scale) {
  const IndexPairs pairs = associate_for_alignment(estimated, reference);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const auto& [i, j] : pairs) {
    src.push_back(estimated[i].pose.translation);
    dst.push_back(reference[j].pose.translation);
  }
  Alignment out;
  out.transform = umeyama(src, dst, with_scale);
  out.pairs = pairs.size();
  out.rmse = alignment_rmse(estimated, reference, pairs, out.transform);
  return out;
}

namespace {

// Second over first principal standard deviation of the positions.
double spread_ratio(const Trajectory& traj) {
  if (traj.size() < 2) return 0.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& s : traj) mean += s.pose.translation;
  mean /= static_cast<double>(traj.size());
  geom::Mat3 scatter = geom::Mat3::Zero();
  for (const auto& s : traj) {
    const Vec3 d = s.pose.translation - mean;
    scatter += d * d.transpose();
  }
  const Eigen::Vector3d sv = Eigen::JacobiSVD<geom::Mat3>(scatter).singularValues();
  return sv(0) > 0.0 ? std::sqrt(std::max(sv(1), 0.0) / sv(0)) : 0.0;
}

}  // namespace

Alignment align_orientation_aided(const Trajectory& estimated, const Trajectory& reference, bool with_scale) {
  const IndexPairs pairs = associate_for_alignment(estimated, reference);
  if (pairs.size() < 2) throw Error(ErrorCode::TooFewAssociations, "need at least 2 pose pairs");
  // Chordal mean of the per-pair rotations ref * est^-1.
  geom::Mat3 acc = geom::Mat3::Zero();
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_d = Vec3::Zero();
  for (const auto& [i, j] : pairs) {
    acc += reference[j].pose.rotation.matrix() * estimated[i].pose.rotation.matrix().transpose();
    mu_s += estimated[i].pose.translation;
    mu_d += reference[j].pose.translation;
  }
  const double n = static_cast<double>(pairs.size());
  mu_s /= n;
  mu_d /= n;
  const Eigen::JacobiSVD<geom::Mat3> svd(acc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  geom::Mat3 d = geom::Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const geom::Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  double scale = 1.0;
  if (with_scale) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& [i, j] : pairs) {
      const Vec3 s = r * (estimated[i].pose.translation - mu_s);
      num += s.dot(reference[j].pose.translation - mu_d);
      den += s.squaredNorm();
    }
    if (!(den > 0.0) || !(num > 0.0)) {
      throw Error(ErrorCode::DegenerateGeometry, "estimated positions do not span a scale");
    }
    scale = num / den;
  }
  Alignment out;
  out.transform = geom::SimilarityTransform(scale, Rotation::from_matrix(r), mu_d - scale * (r * mu_s));
  out.pairs = pairs.size();
  out.rmse = alignment_rmse(estimated, reference, pairs, out.transform);
  out.orientation_aided = true;
  return out;
}

Alignment align(const Trajectory& estimated, const Trajectory& reference, bool with_scale) {
  // Nearly straight paths leave the roll about the path axis to noise.
  constexpr double kMinSpreadRatio = 0.02;
  if (std::min(spread_ratio(estimated), spread_ratio(reference)) < kMinSpreadRatio) {
    return align_orientation_aided(estimated, reference, with_scale);
  }
  try {
    return align_umeyama(estimated, reference, with_scale);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateGeometry) throw;
  }
  return align_orientation_aided(estimated, reference, with_scale);
}

Trajectory transform(const Trajectory& traj, const geom::SimilarityTransform& s) {
  Trajectory out;
  out.set_frame_id(traj.frame_id());
  for (const auto& sample : traj) {
    out.push_back(sample.timestamp, {s.rotation * sample.pose.rotation, s.apply(sample.pose.translation)});
  }
  return out;
}

Trajectory transform(const Trajectory& traj, const RigidTransform& t) {
  Trajectory out;
  out.set_frame_id(traj.frame_id());
  for (const auto& sample : traj) out.push_back(sample.timestamp, geom::compose(t, sample.pose));
  return out;
}

std::vector<Waypoint> to_waypoints(const Trajectory& traj, double spacing, const Tolerances& tol) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::InvalidArgument, "waypoint spacing must be positive");
  if (!(tol.position > 0.0 && tol.yaw > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "waypoint tolerances must be positive");
  }
  std::vector<Waypoint> out;
  if (traj.empty()) return out;
  out.push_back({traj.front().pose, tol});
  // Absorbs accumulated rounding so evenly sampled paths land on the spacing.
  constexpr double kSlack = 1e-9;
  double arc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    arc += (traj[i].pose.translation - traj[i - 1].pose.translation).norm();
    if (arc >= spacing - kSlack) {
      out.push_back({traj[i].pose, tol});
      arc = 0.0;
      last = i;
    }
  }
  if (last != traj.size() - 1) out.push_back({traj.back().pose, tol});
  return out;
}

VelocityCommand velocity_command(const PoseState& state, const Waypoint& target,
                                 const ControllerGains& gains, const ControlLimits& limits) {
  if (!(gains.kp_linear > 0.0 && gains.kp_yaw > 0.0 && limits.v_max > 0.0 && limits.omega_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gains and limits must be positive");
  }
  VelocityCommand cmd;
  cmd.linear = gains.kp_linear * (target.pose.translation - state.position);
  const double n = cmd.linear.norm();
  if (n > limits.v_max) cmd.linear *= limits.v_max / n;
  const double dyaw = geom::wrap_angle(geom::yaw_of(target.pose.rotation) - geom::yaw_of(state.orientation));
  cmd.yaw_rate = std::clamp(gains.kp_yaw * dyaw, -limits.omega_max, limits.omega_max);
  return cmd;
}

bool waypoint_reached(const PoseState& state, const Waypoint& wp) {
  const double dp = (state.position - wp.pose.translation).norm();
  const double dyaw = geom::wrap_angle(geom::yaw_of(state.orientation) - geom::yaw_of(wp.pose.rotation));
  return dp <= wp.tolerance.position && std::abs(dyaw) <= wp.tolerance.yaw;
}

Trajectory rescale(const Trajectory& traj, double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
  Trajectory out;
  out.set_frame_id(traj.frame_id());
  for (const auto& sample : traj) {
    out.push_back(sample.timestamp, {sample.pose.rotation, sample.pose.translation * s});
  }
  return out;
}

std::vector<StateActionPair> state_action_pairs(const Trajectory& traj) {
  std::vector<StateActionPair> out;
  out.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    StateActionPair p;
    p.timestamp = traj[i].timestamp;
    p.state = {traj[i].pose.translation, traj[i].pose.rotation};
    if (i + 1 < traj.size()) {
      const double dt = traj[i + 1].timestamp - traj[i].timestamp;
      p.action.linear = (traj[i + 1].pose.translation - traj[i].pose.translation) / dt;
      p.action.yaw_rate =
          geom::wrap_angle(geom::yaw_of(traj[i + 1].pose.rotation) - geom::yaw_of(traj[i].pose.rotation)) / dt;
    }
    out.push_back(p);
  }
  return out;
}

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  os << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& s : traj) {
    const auto& t = s.pose.translation;
    const auto& r = s.pose.rotation;
    os << fmt9(s.timestamp) << ' ' << fmt9(t.x()) << ' ' << fmt9(t.y()) << ' ' << fmt9(t.z()) << ' '
       << fmt9(r.x()) << ' ' << fmt9(r.y()) << ' ' << fmt9(r.z()) << ' ' << fmt9(r.w()) << '\n';
  }
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  write_trajectory(os, traj);
  if (!os) throw Error(ErrorCode::IoFailure, "failed writing " + path);
}

Trajectory read_trajectory(std::istream& is) {
  Trajectory out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 8 numbers");
      }
    }
    std::string rest;
    if (ls >> rest) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": trailing fields");
    }
    try {
      out.push_back(v[0], {Rotation(v[7], v[4], v[5], v[6]), Vec3(v[1], v[2], v[3])});
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return read_trajectory(is);
}

void write_state_actions(const std::string& path, std::span<const StateActionPair> pairs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  os << "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,yaw_rate\n";
  for (const auto& p : pairs) {
    const auto& q = p.state.orientation;
    os << fmt9(p.timestamp) << ',' << fmt9(p.state.position.x()) << ',' << fmt9(p.state.position.y())
       << ',' << fmt9(p.state.position.z()) << ',' << fmt9(q.w()) << ',' << fmt9(q.x()) << ','
       << fmt9(q.y()) << ',' << fmt9(q.z()) << ',' << fmt9(p.action.linear.x()) << ','
       << fmt9(p.action.linear.y()) << ',' << fmt9(p.action.linear.z()) << ','
       << fmt9(p.action.yaw_rate) << '\n';
  }
  if (!os) throw Error(ErrorCode::IoFailure, "failed writing " + path);
}

}  // namespace skyloop::traj
