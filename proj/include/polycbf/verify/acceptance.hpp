#pragma once

// Acceptance checks, one function per criterion. Each returns a result with a
// one-line detail string; run_all_criteria prints them as PASS/FAIL lines.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "polycbf/diffopt.hpp"
#include "polycbf/geometry.hpp"
#include "polycbf/qp.hpp"
#include "polycbf/sdf.hpp"
#include "polycbf/sim.hpp"
#include "polycbf/verify/oracles.hpp"

namespace polycbf::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) {
  return std::chrono::duration<double>(clock::now() - t0).count();
}

struct PolygonPair {
  std::vector<Vec2> robot;
  std::vector<Vec2> obstacle;
};

inline PolygonPair random_pair(Rng& rng) {
  return {random_convex_vertices(rng, uniform_int(rng, 3, 8)), random_convex_vertices(rng, uniform_int(rng, 3, 8))};
}

/// Largest vertex error between two CCW polygons, minimized over cyclic shifts.
/// Infinite when the vertex counts differ.
inline double cyclic_vertex_error(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < a.size(); ++s) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i] - b[(i + s) % b.size()]).norm());
    best = std::min(best, worst);
  }
  return best;
}

inline double relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& ref) {
  return (got - ref).norm() / std::max(ref.norm(), 1e-12);
}

}  // namespace detail

inline CriterionResult criterion_space_equivalence(std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<detail::PolygonPair> pairs;
  while (pairs.size() < 1000) {
    auto p = detail::random_pair(rng);
    if (sat_disjoint(p.robot, p.obstacle)) pairs.push_back(std::move(p));
  }
  std::vector<ConvexPolygon> robots, obstacles;
  for (const auto& p : pairs) {
    robots.push_back(polygon_from_vertices(p.robot));
    obstacles.push_back(polygon_from_vertices(p.obstacle));
  }
  const auto t0 = detail::clock::now();
  std::vector<double> values;
  for (std::size_t i = 0; i < pairs.size(); ++i) values.push_back(signed_distance(robots[i], obstacles[i]).value);
  const double elapsed = detail::seconds_since(t0);

  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    worst = std::max(worst, std::abs(values[i] - segment_pair_distance(pairs[i].robot, pairs[i].obstacle)));
  }
  std::ostringstream os;
  os << "1000 disjoint pairs, max |sd - segment oracle| = " << worst << ", sdf time " << elapsed << " s";
  return {1, "space equivalence", worst <= 1e-9 && elapsed < 5.0, os.str()};
}

inline CriterionResult criterion_penetration(std::uint64_t seed = 2) {
  Rng rng(seed);
  double worst = 0.0;
  int count = 0;
  while (count < 1000) {
    auto p = detail::random_pair(rng);
    if (sat_disjoint(p.robot, p.obstacle)) continue;
    const auto r = signed_distance(polygon_from_vertices(p.robot), polygon_from_vertices(p.obstacle));
    const double sampled = boundary_sampled_distance(minkowski_difference_hull(p.obstacle, p.robot));
    worst = std::max(worst, std::abs(std::abs(r.value) - sampled));
    ++count;
  }
  std::ostringstream os;
  os << "1000 overlapping pairs, max ||sd| - sampled boundary distance| = " << worst;
  return {2, "penetration depth", worst <= 1e-4, os.str()};
}

inline CriterionResult criterion_collision_predicate(std::uint64_t seed = 3) {
  Rng rng(seed);
  int mismatches = 0, near_contact = 0, disjoint = 0;
  for (int i = 0; i < 2000; ++i) {
    // alternate wide and tight placements so both outcomes are frequent
    const double range = i % 2 == 0 ? 6.0 : 3.0;
    const auto robot = random_convex_vertices(rng, uniform_int(rng, 3, 8), 4.0, range);
    const auto obstacle = random_convex_vertices(rng, uniform_int(rng, 3, 8), 4.0, range);
    const double sd = signed_distance(polygon_from_vertices(robot), polygon_from_vertices(obstacle)).value;
    const bool sat = sat_disjoint(robot, obstacle);
    disjoint += sat ? 1 : 0;
    if (std::abs(sd) < 1e-9) {
      ++near_contact;
      continue;
    }
    if ((sd > 0.0) != sat) ++mismatches;
  }
  std::ostringstream os;
  os << "2000 pairs (" << disjoint << " disjoint), sign mismatches = " << mismatches << ", skipped |sd| < 1e-9: "
     << near_contact;
  return {3, "collision predicate", mismatches == 0, os.str()};
}

inline CriterionResult criterion_minkowski(std::uint64_t seed = 4) {
  Rng rng(seed);
  double worst = 0.0, worst_rep = 0.0;
  int too_many_edges = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = detail::random_pair(rng);
    const auto robot = polygon_from_vertices(p.robot);
    const auto obstacle = polygon_from_vertices(p.obstacle);
    const auto co = minkowski_difference(obstacle, robot);
    const auto hull = minkowski_difference_hull(p.obstacle, p.robot);
    worst = std::max(worst, detail::cyclic_vertex_error(co.vertices(), hull));
    // every oracle vertex satisfies the H-rep, with equality on its two edges
    for (const auto& v : hull) {
      const Eigen::VectorXd slack = co.A() * v - co.b();
      worst_rep = std::max(worst_rep, std::max(slack.maxCoeff(), 0.0));
    }
    if (co.edge_count() > robot.edge_count() + obstacle.edge_count()) ++too_many_edges;
  }
  std::ostringstream os;
  os << "1000 pairs, max vertex error vs hull oracle = " << worst << ", max H-rep violation = " << worst_rep
     << ", edge-count violations = " << too_many_edges;
  return {4, "Minkowski difference", worst <= 1e-9 && worst_rep <= 1e-9 && too_many_edges == 0, os.str()};
}

namespace detail {

struct GradientCase {
  ConvexPolygon robot_base;
  ConvexPolygon obstacle;
  Pose2 pose;
};

inline SdfResult sdf_at(const GradientCase& g, const Pose2& pose) {
  return signed_distance(minkowski_difference(g.obstacle, transform_robot(g.robot_base, Pose2{}, pose)));
}

inline std::vector<int> active_ids(const GradientCase& g, const Pose2& pose) {
  const auto co = minkowski_difference(g.obstacle, transform_robot(g.robot_base, Pose2{}, pose));
  const auto r = signed_distance(co);
  std::vector<int> ids;
  for (int k : r.active_rows) ids.push_back(co.edge_ids()[static_cast<std::size_t>(k)]);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Contact is on the distance branch, the active set is stable under small
/// pose perturbations and every active multiplier is clearly positive.
inline bool non_degenerate(const GradientCase& g) {
  const auto r = sdf_at(g, g.pose);
  if (r.branch != Branch::Distance || r.value < 1e-2) return false;
  for (int k : r.active_rows) {
    if (r.duals(k) < 1e-6) return false;
  }
  const auto ids = active_ids(g, g.pose);
  for (int axis = 0; axis < 3; ++axis) {
    for (double s : {-1e-4, 1e-4}) {
      Pose2 q = g.pose;
      if (axis == 0) q.p.x() += s;
      if (axis == 1) q.p.y() += s;
      if (axis == 2) q.theta += s;
      if (active_ids(g, q) != ids) return false;
    }
  }
  return true;
}

/// Central differences of z* and sd over (x, y[, theta]).
inline std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> reference_jacobians(const GradientCase& g, int axes,
                                                                          double step = 1e-6) {
  Eigen::MatrixXd dz(2, axes);
  Eigen::RowVectorXd dh(axes);
  for (int axis = 0; axis < axes; ++axis) {
    Pose2 plus = g.pose, minus = g.pose;
    if (axis == 0) {
      plus.p.x() += step;
      minus.p.x() -= step;
    } else if (axis == 1) {
      plus.p.y() += step;
      minus.p.y() -= step;
    } else {
      plus.theta += step;
      minus.theta -= step;
    }
    const auto rp = sdf_at(g, plus), rm = sdf_at(g, minus);
    dz.col(axis) = (rp.z_star - rm.z_star) / (2.0 * step);
    dh(axis) = (rp.value - rm.value) / (2.0 * step);
  }
  return {dz, dh};
}

}  // namespace detail

inline CriterionResult criterion_gradients(std::uint64_t seed = 5) {
  Rng rng(seed);
  double worst_translation = 0.0, worst_fd = 0.0;
  int accepted = 0, rejected = 0;
  const PoseLayout planar{2, 0, 1, -1, 0.0};
  const PoseLayout full{3, 0, 1, 2, 0.0};
  while (accepted < 100) {
    const auto robot_body = random_convex_vertices(rng, uniform_int(rng, 3, 8), 2.0, 0.5);
    const auto obstacle_pts = random_convex_vertices(rng, uniform_int(rng, 3, 8), 3.0, 3.0);
    const Pose2 pose{Vec2(uniform(rng, -8.0, 8.0), uniform(rng, -8.0, 8.0)), uniform(rng, -std::numbers::pi, std::numbers::pi)};
    detail::GradientCase g{polygon_from_vertices(robot_body), polygon_from_vertices(obstacle_pts), pose};
    if (!detail::non_degenerate(g)) {
      ++rejected;
      continue;
    }
    const auto co = minkowski_difference(g.obstacle, transform_robot(g.robot_base, Pose2{}, pose));
    const auto sdf = signed_distance(co);

    // translation-only state: closed-form CO derivatives
    {
      const auto derivs = translation_co_derivatives(co, planar);
      const auto sens = kkt_jacobian(co, sdf, derivs);
      const auto grad = cbf_gradient(sdf, sens.dz_dx, 0.0);
      const auto [dz_ref, dh_ref] = detail::reference_jacobians(g, 2);
      worst_translation = std::max({worst_translation, detail::relative_error(sens.dz_dx, dz_ref),
                                    detail::relative_error(grad.dh_dx, dh_ref)});
    }
    // full pose: finite-difference CO derivatives on every axis
    {
      const auto derivs = finite_difference_co_derivatives(g.obstacle, g.robot_base, Pose2{}, pose, full);
      const auto sens = kkt_jacobian(co, sdf, derivs);
      const auto grad = cbf_gradient(sdf, sens.dz_dx, 0.0);
      const auto [dz_ref, dh_ref] = detail::reference_jacobians(g, 3);
      worst_fd = std::max({worst_fd, detail::relative_error(sens.dz_dx, dz_ref),
                           detail::relative_error(grad.dh_dx, dh_ref)});
    }
    ++accepted;
  }
  std::ostringstream os;
  os << "100 configurations (" << rejected << " degenerate draws skipped), max rel err closed-form = "
     << worst_translation << ", finite-difference = " << worst_fd;
  return {5, "gradient fidelity", worst_translation <= 1e-4 && worst_fd <= 1e-4, os.str()};
}

namespace detail {

inline double min_h(const Trace& trace) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records)
    for (const auto& o : r.obstacles) m = std::min(m, o.h);
  return m;
}

}  // namespace detail

inline CriterionResult criterion_case1(const std::filesystem::path& dir = default_scenario_dir()) {
  const auto cfg = resolve_scenario("case1_translation", dir);
  const auto t0 = detail::clock::now();
  const auto trace = run_scenario(cfg);
  const double elapsed = detail::seconds_since(t0);
  const auto s = trace.summary();
  double max_u = 0.0;
  for (const auto& r : trace.records) max_u = std::max(max_u, r.u.cwiseAbs().maxCoeff());
  const double h_min = detail::min_h(trace);
  const bool arrived = s.arrival_time && *s.arrival_time <= 10.0;

  std::ostringstream os;
  os << "arrival(0.1 m) = " << (s.arrival_time ? std::to_string(*s.arrival_time) + " s" : std::string("none"))
     << ", closest approach " << s.min_goal_distance << " m, goal distance at t=" << trace.records.back().t << " s "
     << (trace.records.back().state.head<2>() - cfg.goal).norm() << " m, min h = " << h_min << ", max |u| = " << max_u
     << ", runtime " << elapsed << " s";
  return {6, "case I translation", arrived && h_min >= -1e-6 && max_u <= 5.0 && elapsed < 10.0, os.str()};
}

inline CriterionResult criterion_case2(const std::filesystem::path& dir = default_scenario_dir()) {
  const auto cfg = resolve_scenario("case2_collision_recovery", dir);
  const auto trace = run_scenario(cfg);
  const auto& rec = trace.records;
  const double h0 = rec.front().obstacles.front().h;
  std::size_t cross = rec.size();
  for (std::size_t k = 0; k < rec.size(); ++k) {
    if (rec[k].obstacles.front().h >= 0.0) {
      cross = k;
      break;
    }
  }
  bool monotone = true;
  for (std::size_t k = 1; k < std::min(cross + 1, rec.size()); ++k) {
    if (rec[k].obstacles.front().h < rec[k - 1].obstacles.front().h) monotone = false;
  }
  // after recovery: signed distance >= d_safe - 1e-6, i.e. h >= -1e-6
  double after = std::numeric_limits<double>::infinity();
  for (std::size_t k = cross; k < rec.size(); ++k) after = std::min(after, rec[k].obstacles.front().h);
  const bool recovered = cross < rec.size() && rec[cross].t <= 3.0;

  std::ostringstream os;
  os << "h(x0) = " << h0 << ", first h >= 0 at t = " << (recovered ? std::to_string(rec[cross].t) : std::string("never"))
     << " s, non-decreasing while negative: " << (monotone ? "yes" : "no") << ", min h afterwards = " << after;
  return {7, "case II collision recovery", h0 < 0.0 && recovered && monotone && after >= -1e-6, os.str()};
}

inline CriterionResult criterion_case3(const std::filesystem::path& dir = default_scenario_dir()) {
  const auto cfg = resolve_scenario("case3_multi_obstacle", dir);
  const auto trace = run_scenario(cfg);
  const auto s = trace.summary();
  const double h_min = detail::min_h(trace);
  std::ostringstream os;
  os << cfg.obstacles.size() << " obstacles, min h = " << h_min << ", closest goal approach " << s.min_goal_distance
     << " m, mean loop " << s.mean_loop_ms << " ms (max " << s.max_loop_ms << " ms)";
  return {8, "case III multi-obstacle",
          cfg.obstacles.size() == 4 && h_min >= -1e-6 && s.min_goal_distance <= 0.2 && s.mean_loop_ms <= 15.0,
          os.str()};
}

/// Random single-obstacle scenario with the robot starting clear of the
/// obstacle and the goal on the far side.
inline ScenarioConfig random_safe_scenario(Rng& rng, bool unicycle_model) {
  for (;;) {
    ScenarioConfig c;
    c.name = "random";
    c.robot_vertices = random_convex_vertices(rng, uniform_int(rng, 3, 6), 0.8, 0.0);
    c.obstacles = {random_convex_vertices(rng, uniform_int(rng, 3, 8), 2.5, 0.5)};
    const double phi = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Vec2 start = 5.0 * Vec2(std::cos(phi), std::sin(phi));
    const double psi = phi + std::numbers::pi + uniform(rng, -0.3, 0.3);
    c.goal = 5.0 * Vec2(std::cos(psi), std::sin(psi));
    c.params.gamma = uniform(rng, 0.5, 3.0);
    c.params.epsilon = 0.0;
    c.params.d_safe = uniform(rng, 0.0, 0.2);
    c.params.dt = 0.01;
    c.duration = 8.0;
    c.arrival_tolerance = 0.2;
    if (unicycle_model) {
      c.model = ModelKind::Unicycle;
      c.initial_state = Eigen::Vector4d(start.x(), start.y(), uniform(rng, -std::numbers::pi, std::numbers::pi), 0.0);
      c.v_d = 1.5;
      c.params.p = 8.0;
      c.params.c = 5.0;
      c.params.u_min = Eigen::Vector2d(-5.0, -8.0);
      c.params.u_max = Eigen::Vector2d(5.0, 8.0);
    } else {
      c.model = ModelKind::SingleIntegrator;
      c.initial_state = start;
      c.params.p = 10.0;
      c.params.c = 1.0;
      c.params.u_min = Eigen::Vector2d(-5.0, -5.0);
      c.params.u_max = Eigen::Vector2d(5.0, 5.0);
    }
    const auto model = c.robot_model();
    const auto robot = transform_robot(polygon_from_vertices(c.robot_vertices), Pose2{}, model.pose_of(c.initial_state));
    const double sd = signed_distance(robot, polygon_from_vertices(c.obstacles.front())).value;
    if (sd - c.params.d_safe > 0.1) return c;
  }
}

inline CriterionResult criterion_forward_invariance(std::uint64_t seed = 9) {
  Rng rng(seed);
  double worst = std::numeric_limits<double>::infinity();
  int failures = 0, aborted = 0;
  for (int i = 0; i < 50; ++i) {
    const auto cfg = random_safe_scenario(rng, false);
    double h_min = 0.0;
    try {
      h_min = detail::min_h(run_scenario(cfg));
    } catch (const ScenarioAborted& e) {
      ++aborted;
      h_min = detail::min_h(e.partial_trace());
    }
    worst = std::min(worst, h_min);
    if (h_min < -1e-6) ++failures;
  }
  std::ostringstream os;
  os << "50 single-integrator runs, min h over all runs = " << worst
     << ", runs below -1e-6: " << failures << ", aborted runs: " << aborted;
  return {9, "forward invariance sweep", failures == 0 && aborted == 0, os.str()};
}

inline CriterionResult criterion_qp(std::uint64_t seed = 10) {
  Rng rng(seed);
  double worst_obj = 0.0, worst_kkt = 0.0;
  int not_optimal = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_feasible_qp(rng);
    const auto sol = solve_qp(p);
    if (sol.status != QpStatus::Optimal) {
      ++not_optimal;
      continue;
    }
    const auto ref = dual_projected_gradient(p);
    worst_obj = std::max(worst_obj, std::abs(sol.objective - ref.objective));
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
  }
  std::ostringstream os;
  os << "1000 QPs, max |objective - dual oracle| = " << worst_obj << ", max KKT residual = " << worst_kkt
     << ", non-optimal: " << not_optimal;
  return {10, "QP conformance", not_optimal == 0 && worst_obj <= 1e-7 && worst_kkt <= 1e-8, os.str()};
}

inline void print_result(std::ostream& os, const CriterionResult& r) {
  os << (r.passed ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << ": " << r.detail << std::endl;
}

/// Runs every criterion in order, printing one line each.
inline std::vector<CriterionResult> run_all_criteria(std::ostream& os) {
  using Fn = CriterionResult (*)();
  const std::vector<Fn> all = {
      [] { return criterion_space_equivalence(); }, [] { return criterion_penetration(); },
      [] { return criterion_collision_predicate(); }, [] { return criterion_minkowski(); },
      [] { return criterion_gradients(); },          [] { return criterion_case1(); },
      [] { return criterion_case2(); },              [] { return criterion_case3(); },
      [] { return criterion_forward_invariance(); }, [] { return criterion_qp(); }};
  std::vector<CriterionResult> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    CriterionResult r;
    try {
      r = all[i]();
    } catch (const std::exception& e) {
      r = {static_cast<int>(i + 1), "criterion " + std::to_string(i + 1), false, std::string("exception: ") + e.what()};
    }
    print_result(os, r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace polycbf::verify
