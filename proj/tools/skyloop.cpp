#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "skyloop/config.hpp"
#include "skyloop/eval.hpp"
#include "skyloop/mission.hpp"
#include "skyloop/odometry.hpp"
#include "skyloop/rng.hpp"
#include "skyloop/simworld.hpp"

namespace fs = std::filesystem;
using namespace skyloop;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kDomain = 1, kInput = 2, kPartial = 3 };

void log(const char* level, const std::string& cmd, const std::string& msg) {
  std::cerr << "level=" << level << " cmd=" << cmd << " msg=" << json(msg).dump() << '\n';
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ParseError:
    case ErrorCode::IoFailure:
    case ErrorCode::InvalidArgument:
      return kInput;
    default:
      return kDomain;
  }
}

struct Global {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

Config make_config(const Global& g) {
  std::string path = g.config_path;
  if (path.empty()) {
    if (auto env = process_env("SKYLOOP_CONFIG")) path = *env;
  }
  Config cfg = load_config(path);
  if (g.seed_set) {
    cfg.seed = g.seed;
    cfg.sync();
  }
  return cfg;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

int cmd_extract(const Global& g, const std::string& video, const std::string& out, std::string actions) {
  const Config cfg = make_config(g);
  FrameSequence seq = read_frame_sequence(video);
  log("info", "extract", "read " + std::to_string(seq.frames.size()) + " frames from " + video);
  vo::OdometryResult res;
  try {
    res = vo::run(seq, seq.intrinsics, cfg.odometry);
  } catch (const Error& e) {
    log("error", "extract", e.what());
    return e.code() == ErrorCode::InvalidArgument ? kInput : kDomain;
  }
  if (actions.empty()) actions = sibling(out, "_actions.csv");
  ensure_parent(out);
  ensure_parent(actions);
  traj::write_trajectory(out, res.trajectory);
  traj::write_state_actions(actions, res.state_actions);
  log("info", "extract",
      "wrote " + std::to_string(res.trajectory.size()) + " poses, " + std::to_string(res.keyframes) +
          " keyframes, " + std::to_string(res.map_points) + " map points");
  if (res.partial) {
    log("warn", "extract", "tracking lost; trajectory is partial");
    return kPartial;
  }
  return kOk;
}

std::unique_ptr<mission::VideoProviderInterface> make_provider(const Config& cfg, const sim::Scene& scene) {
  if (cfg.provider_kind == "sim") {
    sim::RenderOptions ro;
    ro.pixel_noise = cfg.pixel_noise;
    ro.noise_seed = cfg.seed;
    return std::make_unique<mission::SimulatorProvider>(scene, cfg.sim, ro);
  }
  if (cfg.provider_kind == "directory") {
    if (cfg.provider_dir.empty()) throw Error(ErrorCode::InvalidArgument, "provider.dir is not set");
    return std::make_unique<mission::DirectoryProvider>(cfg.provider_dir);
  }
  if (cfg.provider_kind == "http") return std::make_unique<mission::HttpProvider>(cfg.provider);
  throw Error(ErrorCode::InvalidArgument, "unknown provider.kind " + cfg.provider_kind);
}

int cmd_mission(const Global& g, const std::string& mission_path, const std::string& scene_path,
                const std::string& out) {
  const Config cfg = make_config(g);
  const mission::MissionSpec spec = mission::read_mission(mission_path, cfg.limits);
  const sim::Scene scene = sim::read_scene(scene_path);
  auto provider = make_provider(cfg, scene);
  mission::Drone drone(scene, cfg.sim, spec.start);
  mission::ScriptedPlanner planner(spec.steps);

  mission::MissionLog result;
  try {
    result = mission::execute_mission(spec, planner, *provider, drone, cfg.executor);
  } catch (const Error& e) {
    log("error", "mission", e.what());
    return e.code() == ErrorCode::EmptyPlan ? kInput : exit_for(e);
  }
  fs::create_directories(out);
  {
    std::ofstream os(fs::path(out) / "mission_log.json");
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write mission log in " + out);
    os << mission::log_to_json(result) << '\n';
  }
  traj::Trajectory executed;
  for (const auto& r : result.records) {
    for (const auto& s : r.executed) {
      if (executed.empty() || s.timestamp > executed.back().timestamp) executed.push_back(s);
    }
    log(r.outcome == mission::Outcome::Ok ? "info" : "warn", "mission",
        "subtask " + std::to_string(r.id) + " " + std::string(mission::to_string(r.outcome)) +
            (r.message.empty() ? "" : ": " + r.message));
  }
  traj::write_trajectory((fs::path(out) / "executed.txt").string(), executed);
  log("info", "mission", "status " + std::string(mission::to_string(result.status)));
  return result.status == mission::Outcome::Ok ? kOk : kDomain;
}

int cmd_eval(const std::string& est_path, const std::string& ref_path, const std::string& align,
             const std::string& report, const std::string& plot) {
  traj::Trajectory est;
  traj::Trajectory ref;
  eval::AlignMode mode;
  try {
    est = traj::read_trajectory(est_path);
    ref = traj::read_trajectory(ref_path);
    mode = eval::parse_align_mode(align);
  } catch (const Error& e) {
    log("error", "eval", e.what());
    return kInput;
  }
  traj::Trajectory aligned;
  eval::MetricsReport rep;
  try {
    rep = eval::evaluate(est, ref, mode, &aligned);
  } catch (const Error& e) {
    log("error", "eval", e.what());
    return kDomain;
  }
  if (report.empty()) {
    std::cerr << eval::format_report_table(rep);
  } else {
    ensure_parent(report);
    eval::emit_report(rep, report);
  }
  if (!plot.empty()) {
    ensure_parent(plot);
    eval::emit_trajectory_plot({{"reference", ref.positions(), true}, {"estimate", aligned.positions(), false}},
                               plot);
  }
  return kOk;
}

struct PathSpec {
  std::string name;
  mission::ScriptedPath path;
};

struct DatasetSpec {
  sim::DroneState start{geom::Vec3(0.0, 0.0, 1.5), {}, geom::Vec3::Zero(), 1.0};
  std::vector<PathSpec> paths;
};

DatasetSpec read_dataset_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  DatasetSpec spec;
  try {
    const json j = json::parse(is);
    // Reuse the mission parser for moves and start state.
    json as_mission = {{"task", "dataset"}, {"steps", json::array()}};
    if (j.contains("start")) as_mission["start"] = j["start"];
    for (const json& p : j.at("paths")) {
      as_mission["steps"].push_back({{"prompt", p.value("name", std::string("path"))},
                                     {"path", {{"speed", p.value("speed", 1.0)}, {"moves", p.at("moves")}}}});
    }
    const mission::MissionSpec m = mission::parse_mission(as_mission.dump());
    spec.start = m.start;
    for (const auto& s : m.steps) spec.paths.push_back({s.prompt, *s.path});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  if (spec.paths.empty()) throw Error(ErrorCode::ParseError, path + ": no paths");
  return spec;
}

mission::ScriptedPath perturb(const mission::ScriptedPath& in, double scale, Rng& rng) {
  mission::ScriptedPath out = in;
  for (auto& m : out.moves) {
    if (m.kind == mission::Move::Kind::Line) {
      m.forward += scale * rng.normal();
      m.left += scale * rng.normal();
    } else {
      m.radius = std::max(0.1, m.radius * (1.0 + scale * rng.normal()));
      m.angle *= 1.0 + scale * rng.normal();
    }
    m.up += scale * rng.normal();
  }
  return out;
}

int cmd_dataset(const Global& g, const std::string& scene_path, const std::string& paths_path,
                const std::string& out, int count, double perturbation) {
  if (count < 1) {
    log("error", "dataset", "--count must be at least 1");
    return kInput;
  }
  if (!(perturbation >= 0.0)) {
    log("error", "dataset", "--perturbation must be non-negative");
    return kInput;
  }
  const Config cfg = make_config(g);
  const sim::Scene scene = sim::read_scene(scene_path);
  const DatasetSpec spec = read_dataset_spec(paths_path);
  const geom::RigidTransform body0{spec.start.orientation, spec.start.position};
  int status = kOk;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t clip_seed = cfg.seed + static_cast<std::uint64_t>(i);
    Rng rng(clip_seed);
    const PathSpec& base = spec.paths[static_cast<std::size_t>(i) % spec.paths.size()];
    const mission::ScriptedPath path = perturb(base.path, perturbation, rng);
    traj::Trajectory cam;
    for (const auto& s : mission::scripted_body_path(path, body0)) {
      cam.push_back(s.timestamp, sim::camera_pose(s.pose, cfg.sim));
    }
    sim::RenderOptions ro;
    ro.pixel_noise = cfg.pixel_noise;
    ro.noise_seed = clip_seed;
    auto [seq, gt] = sim::generate_video(scene, cam, cfg.sim.intrinsics, cfg.sim.fps, ro);

    char name[32];
    std::snprintf(name, sizeof name, "clip_%04d", i);
    const fs::path dir = fs::path(out) / name;
    fs::create_directories(dir);
    write_frame_sequence((dir / "frames").string(), seq);
    traj::write_trajectory((dir / "ground_truth.txt").string(), gt);

    vo::OdometryConfig vcfg = cfg.odometry;
    vcfg.seed = clip_seed;
    try {
      const vo::OdometryResult res = vo::run(seq, seq.intrinsics, vcfg);
      traj::write_trajectory((dir / "trajectory.txt").string(), res.trajectory);
      traj::write_state_actions((dir / "state_actions.csv").string(), res.state_actions);
      if (res.partial && status == kOk) status = kPartial;
      log("info", "dataset", std::string(name) + " " + base.name + ": " + std::to_string(res.trajectory.size()) + " poses");
    } catch (const Error& e) {
      log("error", "dataset", std::string(name) + ": " + e.what());
      status = kDomain;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-to-trajectory extraction, closed-loop missions and trajectory evaluation"};
  app.require_subcommand(1);
  Global g;
  auto add_common = [&g](CLI::App* cmd) {
    cmd->add_option("--config", g.config_path, "Config file (JSON, dotted keys); defaults to $SKYLOOP_CONFIG");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&g](std::uint64_t s) {
          g.seed = s;
          g.seed_set = true;
        },
        "Random seed");
  };

  std::string video, out, actions;
  auto* extract = app.add_subcommand("extract", "Extract a camera trajectory from a frame sequence");
  add_common(extract);
  extract->add_option("video", video, "Frame-sequence directory")->required();
  extract->add_option("--out", out, "Trajectory output file")->required();
  extract->add_option("--actions", actions, "State-action CSV (default: <out>_actions.csv)");

  std::string mission_path, scene_path, mission_out = "mission_out";
  auto* mission_cmd = app.add_subcommand("mission", "Execute a scripted mission in the simulator");
  add_common(mission_cmd);
  mission_cmd->add_option("mission", mission_path, "Mission file")->required();
  mission_cmd->add_option("--scene", scene_path, "Scene file")->required();
  mission_cmd->add_option("--out", mission_out, "Output directory for the log and executed trajectory");

  std::string est, ref, align = "sim3", report, plot;
  auto* eval_cmd = app.add_subcommand("eval", "Compare an estimated trajectory with a reference");
  add_common(eval_cmd);
  eval_cmd->add_option("estimate", est, "Estimated trajectory")->required();
  eval_cmd->add_option("reference", ref, "Reference trajectory")->required();
  eval_cmd->add_option("--align", align, "sim3, se3 or none")
      ->check(CLI::IsMember({"sim3", "se3", "none", "similarity", "rigid"}));
  eval_cmd->add_option("--report", report, "Report JSON path; the text table goes next to it");
  eval_cmd->add_option("--plot", plot, "SVG overlay path");

  std::string ds_scene, ds_paths, ds_out;
  int count = 1;
  double perturbation = 0.05;
  auto* dataset = app.add_subcommand("dataset", "Render clips along perturbed paths and extract them");
  add_common(dataset);
  dataset->add_option("--scene", ds_scene, "Scene file")->required();
  dataset->add_option("--paths", ds_paths, "Path spec file")->required();
  dataset->add_option("--out", ds_out, "Output directory")->required();
  dataset->add_option("--count", count, "Number of clips");
  dataset->add_option("--perturbation", perturbation, "Noise scale applied to path parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (*extract) return cmd_extract(g, video, out, actions);
    if (*mission_cmd) return cmd_mission(g, mission_path, scene_path, mission_out);
    if (*eval_cmd) return cmd_eval(est, ref, align, report, plot);
    if (*dataset) return cmd_dataset(g, ds_scene, ds_paths, ds_out, count, perturbation);
  } catch (const Error& e) {
    log("error", name, e.what());
    return exit_for(e);
  } catch (const fs::filesystem_error& e) {
    log("error", name, e.what());
    return kInput;
  }
  return kInput;
}
