#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "polycbf/controller.hpp"
#include "polycbf/dynamics.hpp"
#include "polycbf/geometry.hpp"

namespace polycbf {

enum class ModelKind { SingleIntegrator, Unicycle };

/// Declarative closed-loop experiment. Robot vertices are given in the body
/// frame (pose (0, 0, 0)); the initial state places the robot in the world.
struct ScenarioConfig {
  std::string name;
  std::string description;
  ModelKind model = ModelKind::SingleIntegrator;
  std::vector<Vec2> robot_vertices;
  Eigen::VectorXd initial_state;
  std::vector<std::vector<Vec2>> obstacles;
  Vec2 goal = Vec2::Zero();
  std::optional<double> v_d;
  ControllerParams params;
  double duration = 10.0;
  std::uint64_t seed = 0;
  double arrival_tolerance = 0.1;

  [[nodiscard]] RobotModel robot_model() const {
    return model == ModelKind::SingleIntegrator ? single_integrator() : unicycle();
  }

  void validate() const {
    const auto m = robot_model();
    (void)polygon_from_vertices(robot_vertices);
    for (const auto& o : obstacles) (void)polygon_from_vertices(o);
    if (initial_state.size() != m.n) throw std::invalid_argument("initial_state has the wrong dimension");
    if (!(duration >= 0.0)) throw std::invalid_argument("duration must be non-negative");
    params.validate();
    if (params.u_min.size() != m.q) throw std::invalid_argument("input bounds have the wrong dimension");
    if (model == ModelKind::Unicycle && !v_d) throw std::invalid_argument("unicycle scenarios need v_d");
  }
};

// JSON mirrors ScenarioConfig field for field.
inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  auto pts = [](const std::vector<Vec2>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({p.x(), p.y()});
    return a;
  };
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j = nlohmann::json{{"name", c.name},
                     {"description", c.description},
                     {"model", c.model == ModelKind::SingleIntegrator ? "single_integrator" : "unicycle"},
                     {"robot_vertices", pts(c.robot_vertices)},
                     {"initial_state", vec(c.initial_state)},
                     {"goal", {c.goal.x(), c.goal.y()}},
                     {"duration", c.duration},
                     {"seed", c.seed},
                     {"arrival_tolerance", c.arrival_tolerance}};
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : c.obstacles) j["obstacles"].push_back(pts(o));
  j["v_d"] = c.v_d ? nlohmann::json(*c.v_d) : nlohmann::json(nullptr);
  j["params"] = {{"gamma", c.params.gamma}, {"epsilon", c.params.epsilon}, {"d_safe", c.params.d_safe},
                 {"p", c.params.p},         {"c", c.params.c},             {"u_min", vec(c.params.u_min)},
                 {"u_max", vec(c.params.u_max)}, {"dt", c.params.dt}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  auto pts = [](const nlohmann::json& a) {
    std::vector<Vec2> v;
    for (const auto& p : a) v.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return v;
  };
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  c.name = j.value("name", std::string{});
  c.description = j.value("description", std::string{});
  const auto model = j.at("model").get<std::string>();
  if (model == "single_integrator") {
    c.model = ModelKind::SingleIntegrator;
  } else if (model == "unicycle") {
    c.model = ModelKind::Unicycle;
  } else {
    throw std::invalid_argument("unknown model '" + model + "'");
  }
  c.robot_vertices = pts(j.at("robot_vertices"));
  c.initial_state = vec(j.at("initial_state"));
  c.obstacles.clear();
  for (const auto& o : j.at("obstacles")) c.obstacles.push_back(pts(o));
  c.goal = Vec2(j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>());
  c.v_d.reset();
  if (j.contains("v_d") && !j.at("v_d").is_null()) c.v_d = j.at("v_d").get<double>();
  const auto& p = j.at("params");
  c.params.gamma = p.at("gamma").get<double>();
  c.params.epsilon = p.at("epsilon").get<double>();
  c.params.d_safe = p.at("d_safe").get<double>();
  c.params.p = p.at("p").get<double>();
  c.params.c = p.at("c").get<double>();
  c.params.u_min = vec(p.at("u_min"));
  c.params.u_max = vec(p.at("u_max"));
  c.params.dt = p.value("dt", 0.01);
  c.duration = j.at("duration").get<double>();
  c.seed = j.value("seed", std::uint64_t{0});
  c.arrival_tolerance = j.value("arrival_tolerance", 0.1);
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
  ScenarioConfig c = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true).get<ScenarioConfig>();
  if (c.name.empty()) c.name = path.stem().string();
  c.validate();
  return c;
}

inline std::filesystem::path default_scenario_dir() {
  if (const char* env = std::getenv("POLYCBF_SCENARIO_DIR")) return env;
#ifdef POLYCBF_DEFAULT_SCENARIO_DIR
  return POLYCBF_DEFAULT_SCENARIO_DIR;
#else
  return "scenarios";
#endif
}

inline const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = {"case1_translation", "case2_collision_recovery",
                                                 "case3_multi_obstacle"};
  return names;
}

/// The three bundled case studies, read from `<dir>/<name>.json`.
inline std::vector<ScenarioConfig> builtin_scenarios(const std::filesystem::path& dir = default_scenario_dir()) {
  std::vector<ScenarioConfig> out;
  for (const auto& name : builtin_scenario_names()) out.push_back(load_scenario(dir / (name + ".json")));
  return out;
}

/// A builtin name or a path to a JSON config.
inline ScenarioConfig resolve_scenario(const std::string& spec,
                                       const std::filesystem::path& dir = default_scenario_dir()) {
  const auto& names = builtin_scenario_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return load_scenario(dir / (spec + ".json"));
  return load_scenario(spec);
}

struct ObstacleSample {
  double h = 0.0;
  Branch branch = Branch::Distance;
  Vec2 z_star = Vec2::Zero();
};

struct TraceRecord {
  double t = 0.0;
  Eigen::VectorXd state;
  Eigen::VectorXd u;
  double delta = 0.0;
  std::vector<ObstacleSample> obstacles;
  int qp_iterations = 0;
  bool fallback = false;
  double loop_ms = 0.0;
};

struct TraceSummary {
  std::vector<double> min_h;
  std::optional<double> arrival_time;
  double min_goal_distance = 0.0;
  double mean_loop_ms = 0.0;
  double max_loop_ms = 0.0;
  int fallback_steps = 0;
};

struct Trace {
  std::string scenario;
  Vec2 goal = Vec2::Zero();
  double arrival_tolerance = 0.1;
  std::vector<TraceRecord> records;

  [[nodiscard]] TraceSummary summary() const {
    TraceSummary s;
    if (records.empty()) return s;
    s.min_h.assign(records.front().obstacles.size(), std::numeric_limits<double>::infinity());
    s.min_goal_distance = std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (const auto& r : records) {
      for (std::size_t i = 0; i < r.obstacles.size(); ++i) s.min_h[i] = std::min(s.min_h[i], r.obstacles[i].h);
      const double dist = (r.state.head<2>() - goal).norm();
      s.min_goal_distance = std::min(s.min_goal_distance, dist);
      if (!s.arrival_time && dist <= arrival_tolerance) s.arrival_time = r.t;
      total += r.loop_ms;
      s.max_loop_ms = std::max(s.max_loop_ms, r.loop_ms);
      if (r.fallback) ++s.fallback_steps;
    }
    s.mean_loop_ms = total / static_cast<double>(records.size());
    return s;
  }
};

/// Safety filter gave up; carries everything simulated up to that point.
class ScenarioAborted : public SafetyFilterFailure {
 public:
  ScenarioAborted(const std::string& what, Trace partial) : SafetyFilterFailure(what), trace_(std::move(partial)) {}
  [[nodiscard]] const Trace& partial_trace() const { return trace_; }

 private:
  Trace trace_;
};

inline std::vector<ClfSpec> scenario_clfs(const ScenarioConfig& cfg) {
  if (cfg.model == ModelKind::SingleIntegrator) return {clf_position(cfg.goal)};
  return {clf_heading(cfg.goal), clf_speed(cfg.v_d.value_or(0.0))};
}

inline RobotGeometry scenario_robot(const ScenarioConfig& cfg) {
  return RobotGeometry{polygon_from_vertices(cfg.robot_vertices), Pose2{}};
}

inline std::vector<ConvexPolygon> scenario_obstacles(const ScenarioConfig& cfg) {
  std::vector<ConvexPolygon> out;
  for (const auto& o : cfg.obstacles) out.push_back(polygon_from_vertices(o));
  return out;
}

/// Closed loop at the configured control period: control_step, then RK4 with
/// the control held over the period. Records t = 0, dt, ..., duration.
inline Trace run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto model = cfg.robot_model();
  SafetyFilter filter(model, scenario_robot(cfg), scenario_obstacles(cfg), scenario_clfs(cfg), cfg.params);
  const double dt = cfg.params.dt;
  const auto steps = static_cast<long>(std::llround(cfg.duration / dt));

  Trace trace;
  trace.scenario = cfg.name;
  trace.goal = cfg.goal;
  trace.arrival_tolerance = cfg.arrival_tolerance;
  trace.records.reserve(static_cast<std::size_t>(steps + 1));

  Eigen::VectorXd x = cfg.initial_state;
  for (long k = 0; k <= steps; ++k) {
    TraceRecord rec;
    rec.t = static_cast<double>(k) * dt;
    rec.state = x;
    const auto t0 = std::chrono::steady_clock::now();
    StepResult step;
    try {
      step = filter.step(x);
    } catch (const SafetyFilterFailure& e) {
      throw ScenarioAborted(e.what(), std::move(trace));
    }
    rec.loop_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rec.u = step.u;
    rec.delta = step.delta;
    rec.qp_iterations = step.qp_iterations;
    rec.fallback = step.fallback;
    for (const auto& d : step.obstacles) rec.obstacles.push_back({d.h, d.branch, d.z_star});
    trace.records.push_back(std::move(rec));
    if (k < steps) x = rk4_step(model, x, step.u, dt);
  }
  return trace;
}

}  // namespace polycbf
