#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/errors.hpp"
#include "polycbf/geometry.hpp"

namespace polycbf {

/// Control-affine model  x' = f(x) + g(x) u.
struct RobotModel {
  std::string name;
  int n = 0;  // state dimension
  int q = 0;  // input dimension
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g;
  PoseLayout layout;
  /// State components that move the configuration obstacle.
  std::vector<int> co_dependent_indices;

  [[nodiscard]] Pose2 pose_of(const Eigen::VectorXd& x) const { return layout.pose_of(x); }
  [[nodiscard]] Eigen::VectorXd rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return f(x) + g(x) * u;
  }
};

/// x = (x, y), x' = u. Orientation is fixed at `theta0`.
inline RobotModel single_integrator(double theta0 = 0.0) {
  RobotModel m;
  m.name = "single_integrator";
  m.n = 2;
  m.q = 2;
  m.f = [](const Eigen::VectorXd&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(2); };
  m.g = [](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Identity(2, 2); };
  m.layout = PoseLayout{2, 0, 1, -1, theta0};
  m.co_dependent_indices = {0, 1};
  return m;
}

/// x = (x, y, theta, v), u = (turn rate, acceleration).
inline RobotModel unicycle() {
  RobotModel m;
  m.name = "unicycle";
  m.n = 4;
  m.q = 2;
  m.f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd out(4);
    out << x(3) * std::cos(x(2)), x(3) * std::sin(x(2)), 0.0, 0.0;
    return out;
  };
  m.g = [](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 2);
    g(2, 0) = 1.0;
    g(3, 1) = 1.0;
    return g;
  };
  m.layout = PoseLayout{4, 0, 1, 2, 0.0};
  m.co_dependent_indices = {0, 1, 2};
  return m;
}

inline constexpr int kDefaultRk4Substeps = 4;

/// Classical RK4 over one control period with u held constant, split into
/// `substeps` equal steps.
inline Eigen::VectorXd rk4_step(const RobotModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                                int substeps = kDefaultRk4Substeps) {
  if (!(dt > 0.0) || substeps < 1) throw std::invalid_argument("rk4_step needs dt > 0 and at least one substep");
  const double h = dt / substeps;
  Eigen::VectorXd s = x;
  for (int i = 0; i < substeps; ++i) {
    const Eigen::VectorXd k1 = model.rhs(s, u);
    const Eigen::VectorXd k2 = model.rhs(s + 0.5 * h * k1, u);
    const Eigen::VectorXd k3 = model.rhs(s + 0.5 * h * k2, u);
    const Eigen::VectorXd k4 = model.rhs(s + h * k3, u);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!s.allFinite()) throw NonFiniteState("integration produced a non-finite state");
  return s;
}

}  // namespace polycbf
