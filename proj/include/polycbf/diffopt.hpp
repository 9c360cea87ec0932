#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/errors.hpp"
#include "polycbf/geometry.hpp"
#include "polycbf/sdf.hpp"

namespace polycbf {

enum class DerivativeSource { ClosedFormTranslation, FiniteDifference, Mixed };

/// State derivatives of a configuration obstacle's halfspace system.
/// dA[j] is d(A^C)/dx_j (rows x 2); db column j is d(b^C)/dx_j.
struct CoDerivatives {
  std::vector<HalfspaceMatrix> dA;
  Eigen::MatrixXd db;
  DerivativeSource source = DerivativeSource::ClosedFormTranslation;

  [[nodiscard]] int rows() const { return static_cast<int>(db.rows()); }
  [[nodiscard]] int n_state() const { return static_cast<int>(db.cols()); }
};

inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kMaxRowAngleJump = 0.1;  // rad
inline constexpr double kSingularKktTolerance = 1e-10;
inline constexpr double kContactEpsilon = 1e-9;  // m

/// Pure translation moves the CO opposite to the robot: dA = 0, db = -A^C on
/// the position columns.
inline CoDerivatives translation_co_derivatives(const ConvexPolygon& co, int n_state, int x_index, int y_index) {
  CoDerivatives d;
  const int rows = co.edge_count();
  d.dA.assign(static_cast<std::size_t>(n_state), HalfspaceMatrix::Zero(rows, 2));
  d.db = Eigen::MatrixXd::Zero(rows, n_state);
  d.db.col(x_index) = -co.A().col(0);
  d.db.col(y_index) = -co.A().col(1);
  d.source = DerivativeSource::ClosedFormTranslation;
  return d;
}

inline CoDerivatives translation_co_derivatives(const ConvexPolygon& co, const PoseLayout& layout) {
  return translation_co_derivatives(co, layout.n_state, layout.x_index, layout.y_index);
}

namespace detail {

enum class PoseAxis { X, Y, Theta };

inline Pose2 perturbed(Pose2 pose, PoseAxis axis, double delta) {
  switch (axis) {
    case PoseAxis::X: pose.p.x() += delta; break;
    case PoseAxis::Y: pose.p.y() += delta; break;
    case PoseAxis::Theta: pose.theta += delta; break;
  }
  return pose;
}

/// Row index in `perturbed` for every row of `nominal`, matched by edge id.
inline std::vector<int> match_rows(const ConvexPolygon& nominal, const ConvexPolygon& perturbed) {
  if (nominal.edge_count() != perturbed.edge_count()) {
    throw ActiveSetChange("configuration obstacle edge count changes under perturbation");
  }
  std::unordered_map<int, int> where;
  for (int k = 0; k < perturbed.edge_count(); ++k) where[perturbed.edge_ids()[static_cast<std::size_t>(k)]] = k;
  std::vector<int> map(static_cast<std::size_t>(nominal.edge_count()));
  for (int k = 0; k < nominal.edge_count(); ++k) {
    const auto it = where.find(nominal.edge_ids()[static_cast<std::size_t>(k)]);
    if (it == where.end()) throw ActiveSetChange("configuration obstacle rows change under perturbation");
    if (std::abs(turn_angle(nominal.normal(k), perturbed.normal(it->second))) > kMaxRowAngleJump) {
      throw ActiveSetChange("configuration obstacle row normal jumps under perturbation");
    }
    map[static_cast<std::size_t>(k)] = it->second;
  }
  return map;
}

/// Central difference of (A^C, b^C) along one pose axis; writes state column `col`.
inline void difference_axis(const ConvexPolygon& nominal, const ConvexPolygon& obstacle, const ConvexPolygon& robot_base,
                            const Pose2& base_pose, const Pose2& pose, PoseAxis axis, int col, double step,
                            CoDerivatives& out) {
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt, step *= 0.5) {
    try {
      const auto plus = minkowski_difference(obstacle, transform_robot(robot_base, base_pose, perturbed(pose, axis, step)));
      const auto minus =
          minkowski_difference(obstacle, transform_robot(robot_base, base_pose, perturbed(pose, axis, -step)));
      const auto mp = match_rows(nominal, plus);
      const auto mm = match_rows(nominal, minus);
      HalfspaceMatrix da(nominal.edge_count(), 2);
      Eigen::VectorXd dbv(nominal.edge_count());
      for (int k = 0; k < nominal.edge_count(); ++k) {
        const int kp = mp[static_cast<std::size_t>(k)];
        const int km = mm[static_cast<std::size_t>(k)];
        da.row(k) = (plus.A().row(kp) - minus.A().row(km)) / (2.0 * step);
        dbv(k) = (plus.b()(kp) - minus.b()(km)) / (2.0 * step);
      }
      if (!da.allFinite() || !dbv.allFinite()) throw ActiveSetChange("non-finite finite-difference derivative");
      out.dA[static_cast<std::size_t>(col)] = da;
      out.db.col(col) = dbv;
      return;
    } catch (const ActiveSetChange& e) {
      last_error = e.what();
    }
  }
  throw ActiveSetChange(last_error);
}

}  // namespace detail

/// Central-difference derivatives of the CO rows with respect to every pose
/// component present in `layout`. Rows of the perturbed COs are matched to the
/// nominal rows by edge id; a change in edge count or a row that disappears or
/// swings by more than 0.1 rad is retried once with half the step, then reported
/// as ActiveSetChange.
inline CoDerivatives finite_difference_co_derivatives(const ConvexPolygon& obstacle, const ConvexPolygon& robot_base,
                                                      const Pose2& base_pose, const Pose2& pose,
                                                      const PoseLayout& layout, double step = kDefaultFdStep) {
  const auto nominal = minkowski_difference(obstacle, transform_robot(robot_base, base_pose, pose));
  CoDerivatives d;
  d.dA.assign(static_cast<std::size_t>(layout.n_state), HalfspaceMatrix::Zero(nominal.edge_count(), 2));
  d.db = Eigen::MatrixXd::Zero(nominal.edge_count(), layout.n_state);
  d.source = DerivativeSource::FiniteDifference;
  using detail::PoseAxis;
  detail::difference_axis(nominal, obstacle, robot_base, base_pose, pose, PoseAxis::X, layout.x_index, step, d);
  detail::difference_axis(nominal, obstacle, robot_base, base_pose, pose, PoseAxis::Y, layout.y_index, step, d);
  if (layout.theta_index >= 0) {
    detail::difference_axis(nominal, obstacle, robot_base, base_pose, pose, PoseAxis::Theta, layout.theta_index, step,
                            d);
  }
  return d;
}

/// Closed-form position columns plus a finite-difference orientation column
/// (when the layout has one). `co` must be the CO at `pose`.
inline CoDerivatives co_derivatives(const ConvexPolygon& co, const ConvexPolygon& obstacle,
                                    const ConvexPolygon& robot_base, const Pose2& base_pose, const Pose2& pose,
                                    const PoseLayout& layout, double step = kDefaultFdStep) {
  auto d = translation_co_derivatives(co, layout);
  if (layout.theta_index >= 0) {
    detail::difference_axis(co, obstacle, robot_base, base_pose, pose, detail::PoseAxis::Theta, layout.theta_index,
                            step, d);
    d.source = DerivativeSource::Mixed;
  }
  return d;
}

/// Implicit derivatives of the optimizer output: dz*/dx (2 x n) and, for the
/// distance branch, the multipliers' derivatives (|active| x n).
struct KktSensitivity {
  Eigen::Matrix<double, 2, Eigen::Dynamic> dz_dx;
  Eigen::MatrixXd dlambda_dx;
  std::vector<int> rows;  // CO rows the lambda block refers to
};

enum class KktRows { Active, All };

/// Differentiates the KKT system of min ||z||^2 s.t. A^C z <= b^C.
///
///   dG/dxi = [ 2I        A^T          ]     dG/dx = [ dA^T lambda               ]
///            [ D(l) A    D(A z - b)   ]             [ D(l) (dA z - db)          ]
///
/// and dxi/dx = -(dG/dxi)^{-1} dG/dx. By default only the active rows enter the
/// system; KktRows::All assembles every row, which gives the same dz/dx because
/// inactive rows have lambda = 0 and a nonzero slack.
///
/// For the penetration branch z* = b_k a_k with a unique active row k, so
/// dz/dx_j = db_kj a_k + b_k da_kj.
inline KktSensitivity kkt_jacobian(const ConvexPolygon& co, const SdfResult& result, const CoDerivatives& derivs,
                                   KktRows which = KktRows::Active) {
  const int n = derivs.n_state();
  if (derivs.rows() != co.edge_count()) throw SingularKkt("derivatives do not match the configuration obstacle");
  KktSensitivity out;

  if (result.branch == Branch::Penetration) {
    if (result.tied || result.active_rows.size() != 1) {
      throw SingularKkt("penetration active row is not unique");
    }
    const int k = result.active_rows.front();
    const Vec2 a = co.normal(k);
    const double b = co.offset(k);
    out.dz_dx.resize(2, n);
    for (int j = 0; j < n; ++j) {
      out.dz_dx.col(j) = derivs.db(k, j) * a + b * derivs.dA[static_cast<std::size_t>(j)].row(k).transpose();
    }
    out.dlambda_dx = Eigen::MatrixXd::Zero(1, n);
    out.rows = {k};
    return out;
  }

  if (result.active_rows.empty()) throw SingularKkt("empty active set");
  std::vector<int> rows;
  if (which == KktRows::Active) {
    rows = result.active_rows;
  } else {
    for (int k = 0; k < co.edge_count(); ++k) rows.push_back(k);
  }
  const int m = static_cast<int>(rows.size());
  const Vec2& z = result.z_star;

  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(2 + m, 2 + m);
  lhs.topLeftCorner(2, 2) = 2.0 * Eigen::Matrix2d::Identity();
  for (int i = 0; i < m; ++i) {
    const int k = rows[static_cast<std::size_t>(i)];
    const Vec2 a = co.normal(k);
    const double lam = result.duals(k);
    lhs.block(0, 2 + i, 2, 1) = a;
    lhs.block(2 + i, 0, 1, 2) = lam * a.transpose();
    lhs(2 + i, 2 + i) = a.dot(z) - co.offset(k);
  }

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(2 + m, n);
  for (int j = 0; j < n; ++j) {
    const auto& dA = derivs.dA[static_cast<std::size_t>(j)];
    Vec2 top = Vec2::Zero();
    for (int i = 0; i < m; ++i) {
      const int k = rows[static_cast<std::size_t>(i)];
      const double lam = result.duals(k);
      top += lam * dA.row(k).transpose();
      rhs(2 + i, j) = lam * (dA.row(k).dot(z) - derivs.db(k, j));
    }
    rhs.block(0, j, 2, 1) = top;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(lhs);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= kSingularKktTolerance * std::max(1.0, sv(0))) {
    throw SingularKkt("KKT matrix is singular for this active set");
  }
  const Eigen::MatrixXd sol = -lhs.fullPivLu().solve(rhs);
  out.dz_dx = sol.topRows(2);
  out.dlambda_dx = sol.bottomRows(m);
  out.rows = std::move(rows);
  return out;
}

struct CbfGradient {
  Eigen::RowVectorXd dh_dx;
  double h = 0.0;
  bool valid = true;
};

/// dh/dx = (dh/dz*)(dz*/dx) with dh/dz* = z*^T / sd, i.e. +z*^T/||z*|| on the
/// distance branch and -z*^T/||z*|| on the penetration branch.
inline CbfGradient cbf_gradient(const SdfResult& result, const Eigen::Matrix<double, 2, Eigen::Dynamic>& dz_dx,
                                double d_safe) {
  const double norm = result.z_star.norm();
  if (norm <= kContactEpsilon) throw ContactSingularity("signed distance gradient undefined at contact");
  const double sign = result.branch == Branch::Distance ? 1.0 : -1.0;
  CbfGradient g;
  g.dh_dx = sign * (result.z_star.transpose() / norm) * dz_dx;
  g.h = result.value - d_safe;
  g.valid = true;
  return g;
}

}  // namespace polycbf
