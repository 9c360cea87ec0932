#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/diffopt.hpp"
#include "polycbf/dynamics.hpp"
#include "polycbf/errors.hpp"
#include "polycbf/geometry.hpp"
#include "polycbf/qp.hpp"
#include "polycbf/sdf.hpp"

namespace polycbf {

struct ControllerParams {
  double gamma = 1.0;    // CBF gain, 1/s
  double epsilon = 0.0;  // CBF offset
  double d_safe = 0.0;   // m
  double p = 1.0;        // CLF slack penalty
  double c = 1.0;        // CLF rate
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
  double dt = 0.01;  // s

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
    if (!(d_safe >= 0.0)) throw std::invalid_argument("d_safe must be non-negative");
    if (!(p > 0.0)) throw std::invalid_argument("slack penalty p must be positive");
    if (!(c > 0.0)) throw std::invalid_argument("CLF rate c must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (u_min.size() != u_max.size() || u_min.size() == 0) throw std::invalid_argument("input bounds size mismatch");
    if (!(u_min.array() < u_max.array()).all()) throw std::invalid_argument("u_min must be below u_max");
  }
};

/// Control Lyapunov function with analytic gradient. `rate` overrides the
/// controller's CLF rate c when set.
struct ClfSpec {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::RowVectorXd(const Eigen::VectorXd&)> gradient;
  std::optional<double> rate;
};

/// V = ||p - x_d||^2 on the first two state components.
inline ClfSpec clf_position(const Vec2& x_d, int n_state = 2) {
  ClfSpec s;
  s.name = "position";
  s.value = [x_d](const Eigen::VectorXd& x) { return (x.head<2>() - x_d).squaredNorm(); };
  s.gradient = [x_d, n_state](const Eigen::VectorXd& x) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(n_state);
    g.head<2>() = 2.0 * (x.head<2>() - x_d).transpose();
    return g;
  };
  return s;
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

inline constexpr double kGoalSingularityRadius = 1e-6;

/// Heading CLF for the unicycle state (x, y, theta, v):
/// V1 = wrap(theta - atan2(y_d - y, x_d - x))^2.
inline ClfSpec clf_heading(const Vec2& x_d) {
  ClfSpec s;
  s.name = "heading";
  auto error = [x_d](const Eigen::VectorXd& x, Vec2& delta) {
    delta = x_d - x.head<2>();
    if (delta.norm() < kGoalSingularityRadius) throw GoalSingularity("bearing to goal undefined at the goal");
    return wrap_angle(x(2) - std::atan2(delta.y(), delta.x()));
  };
  s.value = [error](const Eigen::VectorXd& x) {
    Vec2 delta;
    const double e = error(x, delta);
    return e * e;
  };
  s.gradient = [error](const Eigen::VectorXd& x) {
    Vec2 delta;
    const double e = error(x, delta);
    const double r2 = delta.squaredNorm();
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(4);
    // bearing b = atan2(dy, dx) with dx = x_d - x, dy = y_d - y
    g(0) = -2.0 * e * delta.y() / r2;
    g(1) = 2.0 * e * delta.x() / r2;
    g(2) = 2.0 * e;
    return g;
  };
  return s;
}

/// V2 = (v - v_d)^2 on the unicycle speed.
inline ClfSpec clf_speed(double v_d) {
  ClfSpec s;
  s.name = "speed";
  s.value = [v_d](const Eigen::VectorXd& x) { return (x(3) - v_d) * (x(3) - v_d); };
  s.gradient = [v_d](const Eigen::VectorXd& x) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(4);
    g(3) = 2.0 * (x(3) - v_d);
    return g;
  };
  return s;
}

/// Barrier value and gradient for one obstacle.
struct CbfRow {
  double h = 0.0;
  Eigen::RowVectorXd dh_dx;
};

inline constexpr double kHessianRegularization = 1e-9;

/// CLF-CBF-QP over (u, delta):
///   min  u^T u + p delta^2
///   s.t. -Lg h_i u          <= Lf h_i + gamma h_i - epsilon   (each obstacle)
///         Lg V_j u - delta  <= -Lf V_j - c V_j                (each CLF, shared delta)
///         u_min <= u <= u_max,  delta free
inline QpProblem build_step_qp(const Eigen::VectorXd& x, const RobotModel& model, std::span<const CbfRow> cbfs,
                               std::span<const ClfSpec> clfs, const ControllerParams& params) {
  const int q = model.q;
  const int nv = q + 1;
  const Eigen::VectorXd fx = model.f(x);
  const Eigen::MatrixXd gx = model.g(x);

  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(nv, nv);
  qp.H.topLeftCorner(q, q) = 2.0 * Eigen::MatrixXd::Identity(q, q);
  qp.H(q, q) = 2.0 * params.p;
  qp.H += kHessianRegularization * Eigen::MatrixXd::Identity(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);

  const auto rows = static_cast<Eigen::Index>(cbfs.size() + clfs.size());
  qp.G = Eigen::MatrixXd::Zero(rows, nv);
  qp.d = Eigen::VectorXd::Zero(rows);
  Eigen::Index r = 0;
  for (const auto& cbf : cbfs) {
    const double lf = cbf.dh_dx.dot(fx);
    qp.G.block(r, 0, 1, q) = -cbf.dh_dx * gx;
    qp.d(r) = lf + params.gamma * cbf.h - params.epsilon;
    ++r;
  }
  for (const auto& clf : clfs) {
    const Eigen::RowVectorXd dv = clf.gradient(x);
    const double rate = clf.rate.value_or(params.c);
    qp.G.block(r, 0, 1, q) = dv * gx;
    qp.G(r, q) = -1.0;
    qp.d(r) = -dv.dot(fx) - rate * clf.value(x);
    ++r;
  }

  qp.lb = Eigen::VectorXd::Constant(nv, -std::numeric_limits<double>::infinity());
  qp.ub = Eigen::VectorXd::Constant(nv, std::numeric_limits<double>::infinity());
  qp.lb.head(q) = params.u_min;
  qp.ub.head(q) = params.u_max;
  return qp;
}

/// Robot shape together with the pose it was described at.
struct RobotGeometry {
  ConvexPolygon shape;
  Pose2 base_pose;
};

struct ObstacleDiagnostics {
  double h = std::numeric_limits<double>::quiet_NaN();
  Branch branch = Branch::Distance;
  Vec2 z_star = Vec2::Zero();
  bool gradient_valid = false;
  std::string failure;
  double solve_ms = 0.0;
};

struct StepResult {
  Eigen::VectorXd u;
  double delta = 0.0;
  std::vector<ObstacleDiagnostics> obstacles;
  int qp_iterations = 0;
  bool fallback = false;  // previous control was held
  std::string fallback_reason;
};

/// One CLF-CBF-QP control update. A configuration where some barrier gradient
/// is undefined, or an infeasible QP, holds `prev_u` and sets `fallback`.
/// CLFs whose value is undefined at x (heading at the goal) are left out.
inline StepResult control_step(const Eigen::VectorXd& x, const RobotModel& model, const RobotGeometry& robot,
                               std::span<const ConvexPolygon> obstacles, std::span<const ClfSpec> clfs,
                               const ControllerParams& params, const Eigen::VectorXd& prev_u) {
  using clock = std::chrono::steady_clock;
  StepResult out;
  out.obstacles.resize(obstacles.size());
  std::vector<CbfRow> rows;
  rows.reserve(obstacles.size());

  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    auto& diag = out.obstacles[i];
    const auto t0 = clock::now();
    const Pose2 pose = model.pose_of(x);
    const auto co = minkowski_difference(obstacles[i], transform_robot(robot.shape, robot.base_pose, pose));
    const auto sdf = signed_distance(co);
    diag.h = sdf.value - params.d_safe;
    diag.branch = sdf.branch;
    diag.z_star = sdf.z_star;
    try {
      const auto derivs = co_derivatives(co, obstacles[i], robot.shape, robot.base_pose, pose, model.layout);
      const auto sens = kkt_jacobian(co, sdf, derivs);
      const auto grad = cbf_gradient(sdf, sens.dz_dx, params.d_safe);
      rows.push_back({diag.h, grad.dh_dx});
      diag.gradient_valid = true;
    } catch (const GradientUndefined& e) {
      diag.failure = e.what();
      if (!out.fallback) {
        out.fallback = true;
        out.fallback_reason = "obstacle " + std::to_string(i) + ": " + e.what();
      }
    }
    diag.solve_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }

  if (out.fallback) {
    out.u = prev_u;
    return out;
  }

  std::vector<ClfSpec> usable;
  for (const auto& clf : clfs) {
    try {
      (void)clf.value(x);
      usable.push_back(clf);
    } catch (const GoalSingularity&) {
    }
  }

  const auto qp = build_step_qp(x, model, rows, usable, params);
  const auto sol = solve_qp(qp);
  out.qp_iterations = sol.iterations;
  if (sol.status != QpStatus::Optimal) {
    out.fallback = true;
    out.fallback_reason = "CLF-CBF-QP infeasible";
    out.u = prev_u;
    return out;
  }
  out.u = sol.u_star.head(model.q);
  // the solver stays within the box up to round-off; make it exact
  out.u = out.u.cwiseMax(params.u_min).cwiseMin(params.u_max);
  out.delta = sol.u_star(model.q);
  return out;
}

inline constexpr int kMaxConsecutiveFallbacks = 5;

/// Closed-loop safety filter: control_step plus the zero-order-hold bookkeeping.
/// More than five consecutive fallbacks raise SafetyFilterFailure.
class SafetyFilter {
 public:
  SafetyFilter(RobotModel model, RobotGeometry robot, std::vector<ConvexPolygon> obstacles, std::vector<ClfSpec> clfs,
               ControllerParams params)
      : model_(std::move(model)),
        robot_(std::move(robot)),
        obstacles_(std::move(obstacles)),
        clfs_(std::move(clfs)),
        params_(std::move(params)),
        prev_u_(Eigen::VectorXd::Zero(model_.q)) {
    params_.validate();
  }

  StepResult step(const Eigen::VectorXd& x) {
    auto r = control_step(x, model_, robot_, obstacles_, clfs_, params_, prev_u_);
    if (r.fallback) {
      if (++consecutive_failures_ > kMaxConsecutiveFallbacks) {
        throw SafetyFilterFailure("safety filter failed on more than 5 consecutive steps: " + r.fallback_reason);
      }
    } else {
      consecutive_failures_ = 0;
    }
    prev_u_ = r.u;
    return r;
  }

  [[nodiscard]] const RobotModel& model() const { return model_; }
  [[nodiscard]] const RobotGeometry& robot() const { return robot_; }
  [[nodiscard]] const std::vector<ConvexPolygon>& obstacles() const { return obstacles_; }
  [[nodiscard]] const ControllerParams& params() const { return params_; }

 private:
  RobotModel model_;
  RobotGeometry robot_;
  std::vector<ConvexPolygon> obstacles_;
  std::vector<ClfSpec> clfs_;
  ControllerParams params_;
  Eigen::VectorXd prev_u_;
  int consecutive_failures_ = 0;
};

}  // namespace polycbf
