#include "skyloop/mission.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace skyloop::mission {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Pose in the frame of the path start, heading as yaw about +z.
struct LocalPose {
  Vec3 position = Vec3::Zero();
  double heading = 0.0;
};

double move_length(const Move& m) {
  if (m.kind == Move::Kind::Line) return std::sqrt(m.forward * m.forward + m.left * m.left + m.up * m.up);
  const double arc = m.radius * std::abs(m.angle);
  return std::sqrt(arc * arc + m.up * m.up);
}

LocalPose advance(const LocalPose& start, const Move& m, double f) {
  const Eigen::Rotation2Dd rot(start.heading);
  LocalPose out = start;
  if (m.kind == Move::Kind::Line) {
    const Eigen::Vector2d d = rot * Eigen::Vector2d(m.forward, m.left);
    out.position += Vec3(d.x(), d.y(), m.up) * f;
    return out;
  }
  const double side = m.angle >= 0.0 ? 1.0 : -1.0;
  const Eigen::Vector2d centre = start.position.head<2>() + rot * Eigen::Vector2d(0.0, side * m.radius);
  out.heading = start.heading + m.angle * f;
  const Eigen::Vector2d p = centre + Eigen::Rotation2Dd(out.heading) * Eigen::Vector2d(0.0, -side * m.radius);
  out.position = Vec3(p.x(), p.y(), start.position.z() + m.up * f);
  return out;
}

void validate_move(const Move& m) {
  if (m.kind == Move::Kind::Arc && !(m.radius > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "arc radius must be positive");
  }
}

Move parse_move(const json& j) {
  Move m;
  const std::string type = j.at("type").get<std::string>();
  if (type == "line") {
    m.kind = Move::Kind::Line;
    m.forward = j.value("forward", 0.0);
    m.left = j.value("left", 0.0);
  } else if (type == "arc") {
    m.kind = Move::Kind::Arc;
    m.radius = j.at("radius").get<double>();
    m.angle = j.at("angle").get<double>();
  } else {
    throw Error(ErrorCode::ParseError, "unknown move type " + type);
  }
  m.up = j.value("up", 0.0);
  validate_move(m);
  return m;
}

json pose_row(double t, const RigidTransform& p) {
  const auto& r = p.rotation;
  return json::array({t, p.translation.x(), p.translation.y(), p.translation.z(), r.w(), r.x(),
                      r.y(), r.z()});
}

void record(traj::Trajectory& tr, const Drone& drone) {
  if (tr.empty() || drone.time() > tr.back().timestamp) {
    tr.push_back(drone.time(), {drone.state().orientation, drone.state().position});
  }
}

json trajectory_json(const traj::Trajectory& tr) {
  json rows = json::array();
  for (const auto& s : tr) rows.push_back(pose_row(s.timestamp, s.pose));
  return rows;
}

// Descends to the ground, then marks the drone terminal.
void land(Drone& drone, const ExecutorConfig& cfg, traj::Trajectory& executed) {
  const auto& sc = drone.config();
  const double height = std::max(0.0, drone.state().position.z() - sc.ground_z);
  const auto max_steps = static_cast<std::size_t>(4.0 * height / cfg.land_speed / sc.dt) + 200;
  traj::VelocityCommand down;
  down.linear = Vec3(0.0, 0.0, -cfg.land_speed);
  for (std::size_t i = 0; i < max_steps && drone.state().position.z() > sc.ground_z + 1e-3; ++i) {
    drone.command(down);
    if (i % cfg.executed_stride == 0) record(executed, drone);
  }
  record(executed, drone);
  drone.mark_landed();
}

}  // namespace

double ScriptedPath::length() const {
  double total = 0.0;
  for (const auto& m : moves) total += move_length(m);
  return total;
}

traj::Trajectory scripted_body_path(const ScriptedPath& path, const RigidTransform& start, double rate) {
  if (!(path.speed > 0.0) || !(rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "path speed and sample rate must be positive");
  }
  for (const auto& m : path.moves) validate_move(m);
  const double total = path.length();
  if (path.moves.empty() || !(total > 1e-9)) throw Error(ErrorCode::InvalidArgument, "path has no length");

  std::vector<LocalPose> starts{LocalPose{}};
  for (const auto& m : path.moves) starts.push_back(advance(starts.back(), m, 1.0));

  auto at = [&](double s) {
    for (std::size_t i = 0; i < path.moves.size(); ++i) {
      const double len = move_length(path.moves[i]);
      if (s <= len || i + 1 == path.moves.size()) {
        return advance(starts[i], path.moves[i], len > 0.0 ? std::clamp(s / len, 0.0, 1.0) : 1.0);
      }
      s -= len;
    }
    return starts.back();
  };

  traj::Trajectory out;
  const double duration = total / path.speed;
  const auto n = static_cast<std::size_t>(std::floor(duration * rate + 1e-9));
  for (std::size_t k = 0; k <= n + 1; ++k) {
    const double t = std::min(static_cast<double>(k) / rate, duration);
    if (!out.empty() && t <= out.back().timestamp) break;
    const LocalPose lp = at(t * path.speed);
    out.push_back(t, start * RigidTransform{geom::Rotation::about_z(lp.heading), lp.position});
  }
  return out;
}

void Limits::validate() const {
  if (!(subtask_timeout > 0.0) || !(generation_timeout > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "timeouts must be positive");
  }
  if (!(battery_floor >= 0.0 && battery_floor < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "battery floor must lie in [0, 1)");
  }
}

MissionSpec parse_mission(const std::string& text, const Limits& defaults) {
  MissionSpec spec;
  spec.limits = defaults;
  try {
    const json j = json::parse(text);
    spec.task = j.at("task").get<std::string>();
    spec.initial_image = j.value("initial_image", std::string());
    if (j.contains("limits")) {
      const json& l = j["limits"];
      spec.limits.subtask_timeout = l.value("subtask_timeout", spec.limits.subtask_timeout);
      spec.limits.generation_timeout = l.value("generation_timeout", spec.limits.generation_timeout);
      spec.limits.battery_floor = l.value("battery_floor", spec.limits.battery_floor);
    }
    if (j.contains("start")) {
      const json& st = j["start"];
      if (st.contains("position")) {
        const auto p = st["position"].get<std::vector<double>>();
        if (p.size() != 3) throw Error(ErrorCode::ParseError, "start position needs three values");
        spec.start.position = Vec3(p[0], p[1], p[2]);
      }
      spec.start.orientation = geom::Rotation::about_z(st.value("yaw", 0.0));
      spec.start.battery = st.value("battery", 1.0);
    }
    int id = 1;
    for (const json& s : j.value("steps", json::array())) {
      Subtask sub;
      sub.id = id++;
      sub.prompt = s.at("prompt").get<std::string>();
      if (sub.prompt.empty()) throw Error(ErrorCode::ParseError, "step prompt is empty");
      if (s.contains("path")) {
        ScriptedPath path;
        path.speed = s["path"].value("speed", path.speed);
        for (const json& m : s["path"].at("moves")) path.moves.push_back(parse_move(m));
        sub.path = std::move(path);
      }
      if (s.contains("tolerances")) {
        sub.tolerances.position = s["tolerances"].value("position", sub.tolerances.position);
        sub.tolerances.yaw = s["tolerances"].value("yaw", sub.tolerances.yaw);
      }
      spec.steps.push_back(std::move(sub));
    }
    spec.limits.validate();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("mission: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, std::string("mission: ") + e.what());
  }
  return spec;
}

MissionSpec read_mission(const std::string& path, const Limits& defaults) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_mission(ss.str(), defaults);
}

std::vector<Subtask> ScriptedPlanner::reason(const GrayImage&, const std::string&) { return steps_; }

std::string ScriptedPlanner::refine(const GrayImage&, const Subtask& subtask) { return subtask.prompt; }

std::vector<Subtask> decompose(PlannerInterface& planner, const std::string& task, const GrayImage& image) {
  if (task.empty()) throw Error(ErrorCode::InvalidArgument, "task text is empty");
  std::vector<Subtask> subtasks = planner.reason(image, task);
  if (subtasks.empty()) throw Error(ErrorCode::EmptyPlan, "planner produced no subtasks");
  for (const auto& s : subtasks) {
    if (s.prompt.empty()) throw Error(ErrorCode::InvalidArgument, "subtask prompt is empty");
  }
  return subtasks;
}

SimulatorProvider::SimulatorProvider(const sim::Scene& scene, const sim::SimConfig& cfg,
                                     sim::RenderOptions options)
    : scene_(scene), cfg_(cfg), options_(options) {
  cfg_.validate();
}

FrameSequence SimulatorProvider::generate(const GenerationRequest& request, std::stop_token stop) {
  if (request.subtask == nullptr || !request.subtask->path) {
    throw Error(ErrorCode::ProviderFailure, "subtask has no scripted path");
  }
  if (stop.stop_requested()) throw Error(ErrorCode::GenerationTimeout, "cancelled");
  const RigidTransform body0 = sim::body_pose(request.camera_in_world, cfg_);
  const traj::Trajectory body = scripted_body_path(*request.subtask->path, body0);
  traj::Trajectory cam;
  for (const auto& s : body) cam.push_back(s.timestamp, sim::camera_pose(s.pose, cfg_));
  auto [seq, gt] = sim::generate_video(scene_, cam, cfg_.intrinsics, cfg_.fps, options_);
  if (seq.frames.size() < 2) throw Error(ErrorCode::ProviderFailure, "scripted path too short for a clip");
  seq.scale_hint = ScaleHint{gt.front().timestamp, gt.back().timestamp,
                             (gt.back().pose.translation - gt.front().pose.translation).norm()};
  return seq;
}

std::string SimulatorProvider::reference(const GenerationRequest& request) const {
  return "sim:" + request.id;
}

std::string DirectoryProvider::clip_name(int subtask_id) { return "step_" + std::to_string(subtask_id); }

FrameSequence DirectoryProvider::generate(const GenerationRequest& request, std::stop_token) {
  if (request.subtask == nullptr) throw Error(ErrorCode::ProviderFailure, "request without subtask");
  const std::string dir = root_ + "/" + clip_name(request.subtask->id);
  FrameSequence seq;
  try {
    seq = read_frame_sequence(dir);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, e.what());
  }
  if (seq.frames.size() < 2) throw Error(ErrorCode::ProviderFailure, dir + " holds fewer than two frames");
  return seq;
}

std::string DirectoryProvider::reference(const GenerationRequest& request) const {
  return root_ + "/" + clip_name(request.subtask != nullptr ? request.subtask->id : 0);
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
    std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (n > 1) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (n > 2) v |= bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += n > 1 ? kAlphabet[(v >> 6) & 63] : '=';
    out += n > 2 ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::array<int, 256> table;
  table.fill(-1);
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  for (std::size_t i = 0; i < alphabet.size(); ++i) table[static_cast<unsigned char>(alphabet[i])] = static_cast<int>(i);
  std::vector<unsigned char> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    if (c == '\n' || c == '\r') continue;
    const int v = table[static_cast<unsigned char>(c)];
    if (v < 0) throw Error(ErrorCode::ParseError, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string encode_clip_archive(const FrameSequence& seq) {
  json j = {{"fps", seq.fps},
            {"width", seq.intrinsics.width},
            {"height", seq.intrinsics.height},
            {"fx", seq.intrinsics.fx},
            {"fy", seq.intrinsics.fy},
            {"cx", seq.intrinsics.cx},
            {"cy", seq.intrinsics.cy}};
  if (seq.scale_hint) {
    j["scale_hint"] = {{"t0", seq.scale_hint->t0}, {"t1", seq.scale_hint->t1},
                       {"distance", seq.scale_hint->distance}};
  }
  json frames = json::array();
  for (const auto& f : seq.frames) frames.push_back(base64_encode(encode_png(f)));
  j["frames"] = std::move(frames);
  return j.dump();
}

FrameSequence decode_clip_archive(const std::string& text) {
  FrameSequence seq;
  try {
    const json j = json::parse(text);
    seq.fps = j.at("fps").get<double>();
    seq.intrinsics.width = j.at("width").get<int>();
    seq.intrinsics.height = j.at("height").get<int>();
    seq.intrinsics.fx = j.at("fx").get<double>();
    seq.intrinsics.fy = j.at("fy").get<double>();
    seq.intrinsics.cx = j.at("cx").get<double>();
    seq.intrinsics.cy = j.at("cy").get<double>();
    if (j.contains("scale_hint")) {
      const json& h = j["scale_hint"];
      seq.scale_hint = ScaleHint{h.at("t0").get<double>(), h.at("t1").get<double>(),
                                 h.at("distance").get<double>()};
    }
    for (const json& f : j.at("frames")) {
      GrayImage img = decode_png(base64_decode(f.get<std::string>()));
      if (img.width() != seq.intrinsics.width || img.height() != seq.intrinsics.height) {
        throw Error(ErrorCode::ParseError, "archive frame size disagrees with header");
      }
      seq.frames.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("clip archive: ") + e.what());
  }
  if (!(seq.fps > 0.0)) throw Error(ErrorCode::ParseError, "clip archive: fps must be positive");
  return seq;
}

FrameSequence HttpProvider::generate(const GenerationRequest& request, std::stop_token stop) {
  httplib::Client client(cfg_.url);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(cfg_.request_timeout));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const json body = {{"id", request.id},
                     {"prompt", request.prompt},
                     {"image", base64_encode(encode_png(request.image))}};
  auto posted = client.Post("/generate", body.dump(), "application/json");
  if (!posted) {
    throw Error(ErrorCode::ProviderFailure, "POST /generate: " + httplib::to_string(posted.error()));
  }
  if (posted->status != 200 && posted->status != 202) {
    throw Error(ErrorCode::ProviderFailure, "POST /generate returned " + std::to_string(posted->status));
  }

  const auto poll = std::chrono::duration<double>(cfg_.poll_interval);
  while (!stop.stop_requested()) {
    auto got = client.Get("/result/" + request.id);
    if (!got) throw Error(ErrorCode::ProviderFailure, "GET /result: " + httplib::to_string(got.error()));
    if (got->status == 200) {
      FrameSequence seq = decode_clip_archive(got->body);
      if (seq.frames.size() < 2) throw Error(ErrorCode::ProviderFailure, "clip has fewer than two frames");
      return seq;
    }
    if (got->status != 202 && got->status != 404) {
      throw Error(ErrorCode::ProviderFailure, "GET /result returned " + std::to_string(got->status));
    }
    const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(poll);
    while (!stop.stop_requested() && Clock::now() < until) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  throw Error(ErrorCode::GenerationTimeout, "cancelled while polling " + request.id);
}

std::string HttpProvider::reference(const GenerationRequest& request) const {
  return cfg_.url + "/result/" + request.id;
}

Drone::Drone(const sim::Scene& scene, sim::SimConfig cfg, sim::DroneState initial)
    : scene_(scene), cfg_(std::move(cfg)), state_(initial) {
  cfg_.validate();
}

void Drone::command(const traj::VelocityCommand& cmd) {
  if (landed_) throw Error(ErrorCode::InvalidArgument, "velocity command after landing");
  state_ = sim::step(state_, cmd, cfg_);
  time_ += cfg_.dt;
  ++commands_;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Ok: return "OK";
    case Outcome::Hover: return "HOVER";
    case Outcome::Land: return "LAND";
    case Outcome::Failed: return "FAILED";
  }
  return "FAILED";
}

std::string log_to_json(const MissionLog& log) {
  json records = json::array();
  for (const auto& r : log.records) {
    records.push_back({{"id", r.id},
                       {"prompt", r.prompt},
                       {"video", r.video},
                       {"outcome", to_string(r.outcome)},
                       {"message", r.message},
                       {"extracted", trajectory_json(r.extracted)},
                       {"executed", trajectory_json(r.executed)},
                       {"timings",
                        {{"generation", r.timings.generation},
                         {"extraction", r.timings.extraction},
                         {"execution", r.timings.execution},
                         {"total", r.timings.total}}}});
  }
  const json j = {{"task", log.task}, {"status", to_string(log.status)}, {"subtasks", std::move(records)}};
  return j.dump(1);
}

SubtaskRecord execute_subtask(const Subtask& subtask, PlannerInterface& planner,
                              VideoProviderInterface& provider, Drone& drone, const Limits& limits,
                              const ExecutorConfig& cfg) {
  const auto wall0 = Clock::now();
  SubtaskRecord rec;
  rec.id = subtask.id;
  rec.prompt = subtask.prompt;
  auto sample = [&] { record(rec.executed, drone); };
  auto finish = [&](Outcome outcome, std::string message) {
    rec.outcome = outcome;
    rec.message = std::move(message);
    rec.timings.total = seconds_since(wall0);
    return rec;
  };

  if (drone.landed()) return finish(Outcome::Land, "drone has already landed");
  sample();
  if (drone.state().battery <= limits.battery_floor) {
    land(drone, cfg, rec.executed);
    return finish(Outcome::Land, "battery at or below floor");
  }

  GenerationRequest req;
  req.id = "subtask-" + std::to_string(subtask.id);
  req.image = drone.observe();
  req.prompt = planner.refine(req.image, subtask);
  req.subtask = &subtask;
  req.camera_in_world = drone.camera_in_world();
  rec.video = provider.reference(req);

  // Hover on zero commands at the control rate until the clip arrives.
  const auto gen0 = Clock::now();
  const auto period = std::chrono::duration<double>(drone.config().dt);
  std::stop_source stop;
  std::future<FrameSequence> pending = std::async(
      std::launch::async, [&provider, &req, token = stop.get_token()] { return provider.generate(req, token); });
  std::size_t hover_steps = 0;
  while (pending.wait_for(period) != std::future_status::ready) {
    drone.command({});
    if (++hover_steps % cfg.executed_stride == 0) sample();
    if (drone.state().battery <= limits.battery_floor) {
      stop.request_stop();
      pending.wait();
      rec.timings.generation = seconds_since(gen0);
      land(drone, cfg, rec.executed);
      return finish(Outcome::Land, "battery at or below floor while generating");
    }
    if (seconds_since(gen0) > limits.generation_timeout) {
      stop.request_stop();
      pending.wait();
      rec.timings.generation = seconds_since(gen0);
      sample();
      return finish(Outcome::Hover, "video generation exceeded timeout");
    }
  }
  rec.timings.generation = seconds_since(gen0);
  FrameSequence clip;
  try {
    clip = pending.get();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GenerationTimeout) return finish(Outcome::Hover, e.what());
    return finish(Outcome::Failed, e.what());
  }

  const auto exec0 = Clock::now();
  vo::OdometryResult vo_result;
  try {
    vo_result = vo::run(clip, clip.intrinsics, cfg.odometry);
  } catch (const Error& e) {
    rec.timings.extraction = seconds_since(exec0);
    return finish(Outcome::Failed, std::string("trajectory extraction: ") + e.what());
  }
  rec.timings.extraction = seconds_since(exec0);
  const traj::Trajectory& est = vo_result.trajectory;
  if (vo_result.reference_frame != 0) {
    return finish(Outcome::Failed, "odometry world frame does not start at the first frame");
  }
  if (!clip.scale_hint) return finish(Outcome::Failed, "clip carries no scale hint");
  const ScaleHint& hint = *clip.scale_hint;
  const double slack = 0.5 / clip.fps;
  if (hint.t0 < est.front().timestamp - slack || hint.t1 > est.back().timestamp + slack) {
    return finish(Outcome::Failed, "scale hint lies outside the extracted trajectory");
  }
  const double est_distance = (est.interpolate(hint.t1).translation - est.interpolate(hint.t0).translation).norm();
  if (!(est_distance > 1e-9) || !(hint.distance > 0.0)) {
    return finish(Outcome::Failed, "scale hint spans no motion");
  }
  const double scale = hint.distance / est_distance;
  for (const auto& s : est) {
    const RigidTransform cam{s.pose.rotation, s.pose.translation * scale};
    rec.extracted.push_back(s.timestamp, sim::body_pose(req.camera_in_world * cam, drone.config()));
  }
  if (vo_result.partial) rec.message = "extraction lost track; flying the partial trajectory";

  const std::vector<traj::Waypoint> waypoints =
      traj::to_waypoints(rec.extracted, cfg.waypoint_spacing, subtask.tolerances);
  const double sim0 = drone.time();
  const auto fly0 = Clock::now();
  std::size_t steps = 0;
  for (const auto& wp : waypoints) {
    while (!traj::waypoint_reached(drone.state().pose(), wp)) {
      drone.command(traj::velocity_command(drone.state().pose(), wp, cfg.gains, cfg.control));
      if (++steps % cfg.executed_stride == 0) sample();
      if (drone.state().battery <= limits.battery_floor) {
        land(drone, cfg, rec.executed);
        rec.timings.execution = seconds_since(fly0);
        return finish(Outcome::Land, "battery at or below floor during execution");
      }
      if (drone.time() - sim0 > limits.subtask_timeout || seconds_since(exec0) > limits.subtask_timeout) {
        sample();
        rec.timings.execution = seconds_since(fly0);
        return finish(Outcome::Failed, "waypoint not reached before subtask timeout");
      }
    }
  }
  sample();
  rec.timings.execution = seconds_since(fly0);
  return finish(Outcome::Ok, rec.message);
}

MissionLog execute_mission(const MissionSpec& spec, PlannerInterface& planner,
                           VideoProviderInterface& provider, Drone& drone, const ExecutorConfig& cfg) {
  spec.limits.validate();
  MissionLog log;
  log.task = spec.task;
  const GrayImage image = spec.initial_image.empty() ? drone.observe() : read_png(spec.initial_image);
  const std::vector<Subtask> subtasks = decompose(planner, spec.task, image);
  for (const auto& sub : subtasks) {
    log.records.push_back(execute_subtask(sub, planner, provider, drone, spec.limits, cfg));
    if (log.records.back().outcome != Outcome::Ok) {
      log.status = log.records.back().outcome;
      return log;
    }
  }
  log.status = Outcome::Ok;
  return log;
}

}  // namespace skyloop::mission
