#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/errors.hpp"

namespace polycbf {

/// min 1/2 u^T H u + c^T u  s.t.  G u <= d,  lb <= u <= ub.
/// Infinite bounds are allowed and ignored.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  Eigen::MatrixXd G;
  Eigen::VectorXd d;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  [[nodiscard]] Eigen::Index n() const { return H.rows(); }
  [[nodiscard]] double objective(const Eigen::VectorXd& u) const { return 0.5 * u.dot(H * u) + c.dot(u); }
};

enum class QpStatus { Optimal, Infeasible };

struct QpSolution {
  Eigen::VectorXd u_star;
  Eigen::VectorXd duals;        // one per row of G
  Eigen::VectorXd lower_duals;  // one per variable, zero for infinite bounds
  Eigen::VectorXd upper_duals;
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
};

struct QpOptions {
  double degenerate_ratio_tol = 1e-12;
  double dual_tol = 1e-12;
  double feasibility_tol = 1e-9;
  /// Curvature of the proximal term in the phase-1 problem.
  double phase1_proximal = 1e-6;
};

namespace detail {

/// Stacked inequality rows C x <= e with a map back to the problem's pieces.
struct InequalitySet {
  Eigen::MatrixXd C;
  Eigen::VectorXd e;
  enum class Kind { General, Upper, Lower };
  std::vector<std::pair<Kind, Eigen::Index>> origin;
};

inline InequalitySet stack_inequalities(const QpProblem& p) {
  const Eigen::Index n = p.n();
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  InequalitySet s;
  for (Eigen::Index i = 0; i < p.G.rows(); ++i) {
    rows.emplace_back(p.G.row(i).transpose());
    rhs.push_back(p.d(i));
    s.origin.emplace_back(InequalitySet::Kind::General, i);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(p.ub(i))) {
      rows.emplace_back(Eigen::VectorXd::Unit(n, i));
      rhs.push_back(p.ub(i));
      s.origin.emplace_back(InequalitySet::Kind::Upper, i);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(p.lb(i))) {
      rows.emplace_back(-Eigen::VectorXd::Unit(n, i));
      rhs.push_back(-p.lb(i));
      s.origin.emplace_back(InequalitySet::Kind::Lower, i);
    }
  }
  s.C.resize(static_cast<Eigen::Index>(rows.size()), n);
  s.e.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s.C.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    s.e(static_cast<Eigen::Index>(r)) = rhs[r];
  }
  return s;
}

struct ActiveSetResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // per stacked row
  int iterations = 0;
};

inline bool independent_of(const Eigen::MatrixXd& C, const std::vector<Eigen::Index>& working, Eigen::Index row) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(working.size()) + 1, C.cols());
  for (std::size_t i = 0; i < working.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = C.row(working[i]);
  m.row(m.rows() - 1) = C.row(row);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == m.rows();
}

/// Primal active-set method for a strictly convex QP started from a point
/// that is feasible up to round-off.
inline ActiveSetResult primal_active_set(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, const Eigen::MatrixXd& C,
                                         const Eigen::VectorXd& e, Eigen::VectorXd x, int max_iterations,
                                         const QpOptions& opt) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = C.rows();
  std::vector<Eigen::Index> working;
  std::vector<bool> in_working(static_cast<std::size_t>(m), false);

  for (Eigen::Index i = 0; i < m && static_cast<Eigen::Index>(working.size()) < n; ++i) {
    const double slack = e(i) - C.row(i).dot(x);
    if (slack <= 1e-10 * (1.0 + std::abs(e(i))) && independent_of(C, working, i)) {
      working.push_back(i);
      in_working[static_cast<std::size_t>(i)] = true;
    }
  }

  ActiveSetResult res;
  bool last_step_degenerate = false;
  // after a full, unblocked step x minimizes over the working set; the next
  // step is zero up to round-off, which can be large when H is ill-scaled
  bool at_subspace_minimum = false;
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    const auto w = static_cast<Eigen::Index>(working.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + w, n + w);
    kkt.topLeftCorner(n, n) = H;
    for (Eigen::Index i = 0; i < w; ++i) {
      kkt.block(0, n + i, n, 1) = C.row(working[static_cast<std::size_t>(i)]).transpose();
      kkt.block(n + i, 0, 1, n) = C.row(working[static_cast<std::size_t>(i)]);
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + w);
    rhs.head(n) = -(H * x + c);
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const Eigen::VectorXd step = sol.head(n);
    const Eigen::VectorXd lam = sol.tail(w);

    if (at_subspace_minimum || step.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      at_subspace_minimum = false;
      // stationary on the working set; drop a constraint with a negative multiplier
      Eigen::Index drop = -1;
      double most_negative = -opt.dual_tol * (1.0 + lam.lpNorm<Eigen::Infinity>());
      for (Eigen::Index i = 0; i < w; ++i) {
        if (lam(i) < most_negative) {
          if (last_step_degenerate) {
            // Bland: smallest constraint index among the negative multipliers
            if (drop < 0 || working[static_cast<std::size_t>(i)] < working[static_cast<std::size_t>(drop)]) drop = i;
          } else {
            most_negative = lam(i);
            drop = i;
          }
        }
      }
      if (drop < 0) {
        res.x = x;
        res.lambda = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < w; ++i) res.lambda(working[static_cast<std::size_t>(i)]) = std::max(0.0, lam(i));
        return res;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = false;
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double slope = C.row(i).dot(step);
      if (slope <= opt.degenerate_ratio_tol) continue;
      const double ratio = std::max(0.0, (e(i) - C.row(i).dot(x)) / slope);
      if (ratio < alpha || (blocking >= 0 && ratio == alpha && i < blocking)) {
        alpha = ratio;
        blocking = i;
      }
    }
    x += alpha * step;
    at_subspace_minimum = blocking < 0;
    last_step_degenerate = alpha <= opt.degenerate_ratio_tol;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = true;
    }
  }
  throw IterationLimit("active-set QP exceeded its iteration cap");
}

}  // namespace detail

/// Primal active-set QP solver for small dense problems.
///
/// Starts from the unconstrained optimum clipped to the bounds. When that point
/// violates G u <= d, a phase-1 problem in (u, t) with exact penalty on the
/// maximum violation t either finds a feasible start (t = 0) or reports the
/// problem infeasible.
inline QpSolution solve_qp(const QpProblem& problem, const QpOptions& opt = {}) {
  const Eigen::Index n = problem.n();
  if (problem.H.cols() != n || problem.c.size() != n || problem.lb.size() != n || problem.ub.size() != n ||
      problem.G.cols() != (problem.G.rows() > 0 ? n : problem.G.cols()) || problem.d.size() != problem.G.rows()) {
    throw std::invalid_argument("QP dimensions are inconsistent");
  }
  if ((problem.H - problem.H.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + problem.H.lpNorm<Eigen::Infinity>())) {
    throw std::invalid_argument("QP Hessian is not symmetric");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(problem.H);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("QP Hessian is not positive definite");

  const auto ineq = detail::stack_inequalities(problem);
  const Eigen::Index m = ineq.C.rows();
  const int cap = 50 * static_cast<int>(n + m);

  Eigen::VectorXd x0 = llt.solve(-problem.c);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = std::clamp(x0(i), problem.lb(i), problem.ub(i));

  QpSolution sol;
  int used = 0;
  const double violation = problem.G.rows() > 0 ? (problem.G * x0 - problem.d).maxCoeff() : 0.0;
  Eigen::VectorXd start = x0;
  if (violation > 0.0) {
    // phase 1 over (u, t): min t + r/2 (|u - x0|^2 + t^2)  s.t.  G u - t <= d, bounds, t >= 0
    const double r = opt.phase1_proximal;
    Eigen::MatrixXd H1 = r * Eigen::MatrixXd::Identity(n + 1, n + 1);
    Eigen::VectorXd c1(n + 1);
    c1.head(n) = -r * x0;
    c1(n) = 1.0;
    Eigen::MatrixXd C1 = Eigen::MatrixXd::Zero(m + 1, n + 1);
    Eigen::VectorXd e1(m + 1);
    C1.topLeftCorner(m, n) = ineq.C;
    e1.head(m) = ineq.e;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ineq.origin[static_cast<std::size_t>(i)].first == detail::InequalitySet::Kind::General) C1(i, n) = -1.0;
    }
    C1(m, n) = -1.0;
    e1(m) = 0.0;
    Eigen::VectorXd y0(n + 1);
    y0.head(n) = x0;
    y0(n) = violation;
    const auto p1 = detail::primal_active_set(H1, c1, C1, e1, y0, cap, opt);
    used = p1.iterations;
    const double scale = 1.0 + problem.d.lpNorm<Eigen::Infinity>();
    if (p1.x(n) > opt.feasibility_tol * scale) {
      sol.status = QpStatus::Infeasible;
      sol.u_star = p1.x.head(n);
      sol.duals = Eigen::VectorXd::Zero(problem.G.rows());
      sol.lower_duals = Eigen::VectorXd::Zero(n);
      sol.upper_duals = Eigen::VectorXd::Zero(n);
      sol.iterations = used;
      sol.objective = problem.objective(sol.u_star);
      return sol;
    }
    start = p1.x.head(n);
  }

  const auto p2 = detail::primal_active_set(problem.H, problem.c, ineq.C, ineq.e, start, std::max(1, cap - used), opt);
  sol.status = QpStatus::Optimal;
  sol.u_star = p2.x;
  sol.iterations = used + p2.iterations;
  sol.duals = Eigen::VectorXd::Zero(problem.G.rows());
  sol.lower_duals = Eigen::VectorXd::Zero(n);
  sol.upper_duals = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto [kind, idx] = ineq.origin[static_cast<std::size_t>(i)];
    switch (kind) {
      case detail::InequalitySet::Kind::General: sol.duals(idx) = p2.lambda(i); break;
      case detail::InequalitySet::Kind::Upper: sol.upper_duals(idx) = p2.lambda(i); break;
      case detail::InequalitySet::Kind::Lower: sol.lower_duals(idx) = p2.lambda(i); break;
    }
  }
  sol.objective = problem.objective(sol.u_star);

  // stationarity, primal feasibility and complementarity, all in max-norm
  const Eigen::VectorXd lam_all = p2.lambda;
  const Eigen::VectorXd station = problem.H * sol.u_star + problem.c + ineq.C.transpose() * lam_all;
  const Eigen::VectorXd slack = ineq.e - ineq.C * sol.u_star;
  double res = station.lpNorm<Eigen::Infinity>();
  if (m > 0) {
    res = std::max(res, std::max(0.0, -slack.minCoeff()));
    res = std::max(res, lam_all.cwiseProduct(slack).lpNorm<Eigen::Infinity>());
  }
  sol.kkt_residual = res;
  return sol;
}

}  // namespace polycbf
