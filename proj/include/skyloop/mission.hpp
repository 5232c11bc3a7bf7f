#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "skyloop/frame_sequence.hpp"
#include "skyloop/geom.hpp"
#include "skyloop/image.hpp"
#include "skyloop/odometry.hpp"
#include "skyloop/simworld.hpp"
#include "skyloop/trajectory.hpp"

// Closed-loop mission execution: a planner splits a task into subtasks, a
// video provider supplies a clip per subtask, odometry turns the clip into
// waypoints and the simulated drone flies them.
namespace skyloop::mission {

using geom::RigidTransform;
using geom::Vec3;

/// One leg of a scripted path, relative to the heading at its start.
struct Move {
  enum class Kind { Line, Arc };
  Kind kind = Kind::Line;
  double forward = 0.0;  // line, m
  double left = 0.0;     // line, m
  double up = 0.0;       // both, m
  double radius = 0.0;   // arc, m
  double angle = 0.0;    // arc, rad, positive turns left
};

/// Ground-truth motion the simulator provider renders for a subtask.
struct ScriptedPath {
  std::vector<Move> moves;
  double speed = 1.0;  // m/s

  double length() const;
};

/// Body poses along the path starting from `start`, sampled at `rate` Hz,
/// timestamps from 0. Throws InvalidArgument for an empty or zero-length path.
traj::Trajectory scripted_body_path(const ScriptedPath& path, const RigidTransform& start,
                                    double rate = 100.0);

struct Subtask {
  int id = 0;
  std::string prompt;
  std::optional<ScriptedPath> path;
  traj::Tolerances tolerances;
};

struct Limits {
  double subtask_timeout = 120.0;    // s
  double generation_timeout = 90.0;  // s
  double battery_floor = 0.2;

  /// Throws InvalidArgument.
  void validate() const;
};

struct MissionSpec {
  std::string task;
  std::string initial_image;  // PNG path; empty means observe the drone
  Limits limits;
  sim::DroneState start{Vec3(0.0, 0.0, 1.5), {}, Vec3::Zero(), 1.0};
  std::vector<Subtask> steps;
};

/// Mission file: {"task", "initial_image"?, "limits"?, "start"?: {"position",
/// "yaw", "battery"}, "steps": [{"prompt",
/// "path"?: {"speed"?, "moves": [{"type": "line"|"arc", ...}]},
/// "tolerances"?: {"position", "yaw"}}]}. Limits missing from the file
/// fall back to `defaults`. Throws ParseError.
MissionSpec parse_mission(const std::string& text, const Limits& defaults = {});
MissionSpec read_mission(const std::string& path, const Limits& defaults = {});

class PlannerInterface {
 public:
  virtual ~PlannerInterface() = default;
  virtual std::vector<Subtask> reason(const GrayImage& image, const std::string& task) = 0;
  virtual std::string refine(const GrayImage& image, const Subtask& subtask) = 0;
};

/// Replays the steps of a mission file.
class ScriptedPlanner : public PlannerInterface {
 public:
  explicit ScriptedPlanner(std::vector<Subtask> steps) : steps_(std::move(steps)) {}
  std::vector<Subtask> reason(const GrayImage& image, const std::string& task) override;
  std::string refine(const GrayImage& image, const Subtask& subtask) override;

 private:
  std::vector<Subtask> steps_;
};

/// Throws InvalidArgument for an empty task, EmptyPlan for zero subtasks.
std::vector<Subtask> decompose(PlannerInterface& planner, const std::string& task,
                               const GrayImage& image);

struct GenerationRequest {
  std::string id;
  GrayImage image;
  std::string prompt;
  const Subtask* subtask = nullptr;
  /// Camera pose at capture time. Only the simulator provider reads it.
  RigidTransform camera_in_world;
};

class VideoProviderInterface {
 public:
  virtual ~VideoProviderInterface() = default;
  /// Returns at least two frames or throws. Should give up early once
  /// `stop` is requested.
  virtual FrameSequence generate(const GenerationRequest& request, std::stop_token stop) = 0;
  /// Where the clip for a request comes from, for the mission log.
  virtual std::string reference(const GenerationRequest& request) const = 0;
};

/// Renders the subtask's scripted path from the current camera pose and
/// attaches a scale hint covering the whole clip.
class SimulatorProvider : public VideoProviderInterface {
 public:
  SimulatorProvider(const sim::Scene& scene, const sim::SimConfig& cfg,
                    sim::RenderOptions options = {});
  FrameSequence generate(const GenerationRequest& request, std::stop_token stop) override;
  std::string reference(const GenerationRequest& request) const override;

 private:
  const sim::Scene& scene_;
  sim::SimConfig cfg_;
  sim::RenderOptions options_;
};

/// Replays `<root>/step_<id>` clips in the frame-sequence layout.
class DirectoryProvider : public VideoProviderInterface {
 public:
  explicit DirectoryProvider(std::string root) : root_(std::move(root)) {}
  FrameSequence generate(const GenerationRequest& request, std::stop_token stop) override;
  std::string reference(const GenerationRequest& request) const override;
  static std::string clip_name(int subtask_id);

 private:
  std::string root_;
};

struct HttpProviderConfig {
  std::string url = "http://127.0.0.1:8080";
  double poll_interval = 1.0;     // s
  double request_timeout = 30.0;  // s, per HTTP exchange
};

/// POST /generate {"id", "prompt", "image": base64 PNG}, then polls
/// GET /result/{id}: 202 while pending, 200 with a clip archive when done.
class HttpProvider : public VideoProviderInterface {
 public:
  explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}
  FrameSequence generate(const GenerationRequest& request, std::stop_token stop) override;
  std::string reference(const GenerationRequest& request) const override;

 private:
  HttpProviderConfig cfg_;
};

std::string base64_encode(const std::vector<unsigned char>& bytes);
/// Throws ParseError on characters outside the alphabet.
std::vector<unsigned char> base64_decode(const std::string& text);

/// Clip archive: meta.json fields plus "frames": [base64 PNG, ...].
std::string encode_clip_archive(const FrameSequence& seq);
/// Throws ParseError.
FrameSequence decode_clip_archive(const std::string& text);

/// Simulated drone whose state doubles as the onboard estimate.
class Drone {
 public:
  Drone(const sim::Scene& scene, sim::SimConfig cfg, sim::DroneState initial = {});

  /// Advances one control period. Throws InvalidArgument once landed.
  void command(const traj::VelocityCommand& cmd);
  void mark_landed() { landed_ = true; }

  const sim::DroneState& state() const { return state_; }
  const sim::SimConfig& config() const { return cfg_; }
  const sim::Scene& scene() const { return scene_; }
  double time() const { return time_; }
  bool landed() const { return landed_; }
  std::size_t commands_issued() const { return commands_; }
  RigidTransform camera_in_world() const { return sim::camera_pose(state_, cfg_); }
  GrayImage observe() const { return sim::observe(state_, scene_, cfg_); }

 private:
  const sim::Scene& scene_;
  sim::SimConfig cfg_;
  sim::DroneState state_;
  double time_ = 0.0;
  std::size_t commands_ = 0;
  bool landed_ = false;
};

enum class Outcome { Ok, Hover, Land, Failed };

std::string_view to_string(Outcome outcome);

struct Timings {
  double generation = 0.0;  // s, wall clock
  double extraction = 0.0;
  double execution = 0.0;
  double total = 0.0;
};

struct SubtaskRecord {
  int id = 0;
  std::string prompt;
  std::string video;
  Outcome outcome = Outcome::Failed;
  std::string message;
  traj::Trajectory extracted;  // body poses in world
  traj::Trajectory executed;   // body poses in world, sim time
  Timings timings;
};

struct MissionLog {
  std::string task;
  std::vector<SubtaskRecord> records;
  Outcome status = Outcome::Failed;
};

std::string log_to_json(const MissionLog& log);

struct ExecutorConfig {
  vo::OdometryConfig odometry;
  traj::ControllerGains gains;
  traj::ControlLimits control;
  double waypoint_spacing = 0.5;  // m
  double land_speed = 0.3;        // m/s
  std::size_t executed_stride = 5;
};

/// Runs one subtask to an outcome. Failures of the pipeline are reported in
/// the record, never thrown.
SubtaskRecord execute_subtask(const Subtask& subtask, PlannerInterface& planner,
                              VideoProviderInterface& provider, Drone& drone,
                              const Limits& limits, const ExecutorConfig& cfg);

/// Stops at the first subtask that is not OK. Propagates EmptyPlan.
MissionLog execute_mission(const MissionSpec& spec, PlannerInterface& planner,
                           VideoProviderInterface& provider, Drone& drone,
                           const ExecutorConfig& cfg);

}  // namespace skyloop::mission
