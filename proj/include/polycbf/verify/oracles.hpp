#pragma once

// Reference implementations used only to check the library. Nothing here
// calls into the code paths it is meant to verify: hulls are gift-wrapped,
// distances are taken between workspace segments, penetration is sampled
// along the boundary and the QP reference runs projected gradient on the dual.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/geometry.hpp"
#include "polycbf/qp.hpp"

namespace polycbf::verify {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Vertices of a random convex polygon with `edges` corners on a rotated
/// ellipse, all inside [-10, 10]^2.
inline std::vector<Vec2> random_convex_vertices(Rng& rng, int edges, double max_radius = 4.0,
                                                double center_range = 6.0) {
  for (;;) {
    std::vector<double> angles;
    for (int i = 0; i < edges; ++i) angles.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
    std::sort(angles.begin(), angles.end());
    bool spaced = true;
    for (int i = 0; i < edges; ++i) {
      const double next = i + 1 < edges ? angles[static_cast<std::size_t>(i + 1)] : angles[0] + 2.0 * std::numbers::pi;
      if (next - angles[static_cast<std::size_t>(i)] < 0.08) spaced = false;
    }
    if (!spaced) continue;
    const double a = uniform(rng, 0.5, max_radius);
    const double b = a * uniform(rng, 0.4, 1.0);
    const Mat2 rot = rotation(uniform(rng, -std::numbers::pi, std::numbers::pi));
    const Vec2 c(uniform(rng, -center_range, center_range), uniform(rng, -center_range, center_range));
    std::vector<Vec2> pts;
    bool inside = true;
    for (double t : angles) {
      const Vec2 p = c + rot * Vec2(a * std::cos(t), b * std::sin(t));
      inside = inside && p.cwiseAbs().maxCoeff() <= 10.0;
      pts.push_back(p);
    }
    if (inside) return pts;
  }
}

/// Convex hull by gift wrapping, CCW, no collinear points, starting at the
/// lexicographically smallest point.
inline std::vector<Vec2> gift_wrap_hull(const std::vector<Vec2>& pts) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].x() < pts[start].x() || (pts[i].x() == pts[start].x() && pts[i].y() < pts[start].y())) start = i;
  }
  std::vector<Vec2> hull;
  std::size_t cur = start;
  do {
    hull.push_back(pts[cur]);
    std::size_t next = cur == 0 ? 1 : 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == cur) continue;
      const Vec2 a = pts[next] - pts[cur];
      const Vec2 b = pts[i] - pts[cur];
      const double cr = a.x() * b.y() - a.y() * b.x();
      // keep the most clockwise candidate; among collinear ones the farthest
      if (cr < 0.0 || (cr == 0.0 && b.squaredNorm() > a.squaredNorm())) next = i;
    }
    cur = next;
  } while (cur != start && hull.size() <= pts.size());
  return hull;
}

/// Hull of all pairwise vertex differences o - r.
inline std::vector<Vec2> minkowski_difference_hull(const std::vector<Vec2>& obstacle, const std::vector<Vec2>& robot) {
  std::vector<Vec2> diffs;
  for (const auto& o : obstacle) {
    for (const auto& r : robot) diffs.push_back(o - r);
  }
  return gift_wrap_hull(diffs);
}

/// Separating-axis test on the edge normals of both polygons. True when some
/// axis shows a strictly positive gap.
inline bool sat_disjoint(const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
  auto separated_by_edges_of = [](const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Vec2 e = a[(i + 1) % a.size()] - a[i];
      const Vec2 axis(e.y(), -e.x());
      double amin = std::numeric_limits<double>::infinity(), amax = -amin;
      double bmin = amin, bmax = -amin;
      for (const auto& v : a) {
        amin = std::min(amin, axis.dot(v));
        amax = std::max(amax, axis.dot(v));
      }
      for (const auto& v : b) {
        bmin = std::min(bmin, axis.dot(v));
        bmax = std::max(bmax, axis.dot(v));
      }
      if (amax < bmin || bmax < amin) return true;
    }
    return false;
  };
  return separated_by_edges_of(p, q) || separated_by_edges_of(q, p);
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (a + t * d - p).norm();
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
    return (v > 0) - (v < 0);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

inline double segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d), point_segment_distance(c, a, b),
                   point_segment_distance(d, a, b)});
}

/// Workspace distance between disjoint polygons: minimum over all
/// robot-edge x obstacle-edge segment pairs.
inline double segment_pair_distance(const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      best = std::min(best, segment_distance(p[i], p[(i + 1) % p.size()], q[j], q[(j + 1) % q.size()]));
    }
  }
  return best;
}

/// Distance from the origin to the boundary of a polygon by dense sampling:
/// `samples` points per edge, then the same count again around the best sample
/// of each edge.
inline double boundary_sampled_distance(const std::vector<Vec2>& poly, int samples = 10000) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 d = poly[(i + 1) % poly.size()] - a;
    double edge_best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int s = 0; s <= samples; ++s) {
      const double dist = (a + (static_cast<double>(s) / samples) * d).norm();
      if (dist < edge_best) {
        edge_best = dist;
        arg = s;
      }
    }
    const double lo = std::max(0.0, (arg - 1.0) / samples);
    const double hi = std::min(1.0, (arg + 1.0) / samples);
    for (int s = 0; s <= samples; ++s) {
      const double t = lo + (hi - lo) * static_cast<double>(s) / samples;
      edge_best = std::min(edge_best, (a + t * d).norm());
    }
    best = std::min(best, edge_best);
  }
  return best;
}

/// Transformed robot vertices straight from the rigid-body map, without the
/// halfspace bookkeeping of transform_robot.
inline std::vector<Vec2> place_vertices(const std::vector<Vec2>& body, const Pose2& pose) {
  const Mat2 r = rotation(pose.theta);
  std::vector<Vec2> out;
  for (const auto& v : body) out.push_back(r * v + pose.p);
  return out;
}

/// Reference optimum of a strictly convex QP by accelerated projected gradient
/// on its dual, min 1/2 l^T Q l + q^T l over l >= 0 with Q = C H^-1 C^T and
/// q = C H^-1 c + e. The dual variables are Jacobi-scaled and momentum restarts
/// when the step turns against the previous one. Returns the primal objective at u(l), which
/// equals the optimum once the projected gradient vanishes.
struct DualOracleResult {
  double objective = 0.0;
  Eigen::VectorXd u;
  int iterations = 0;
  double projected_gradient = 0.0;
};

inline DualOracleResult dual_projected_gradient(const QpProblem& p, int max_iterations = 5000000,
                                                double gradient_tol = 1e-13) {
  const Eigen::Index n = p.n();
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < p.G.rows(); ++i) {
    rows.emplace_back(p.G.row(i).transpose());
    rhs.push_back(p.d(i));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(p.ub(i))) {
      rows.emplace_back(Eigen::VectorXd::Unit(n, i));
      rhs.push_back(p.ub(i));
    }
    if (std::isfinite(p.lb(i))) {
      rows.emplace_back(-Eigen::VectorXd::Unit(n, i));
      rhs.push_back(-p.lb(i));
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd C(m, n);
  Eigen::VectorXd e(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    C.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    e(i) = rhs[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd Hinv = p.H.inverse();
  auto primal = [&](const Eigen::VectorXd& lam) -> Eigen::VectorXd { return -Hinv * (p.c + C.transpose() * lam); };

  DualOracleResult r;
  if (m == 0) {
    r.u = primal(Eigen::VectorXd());
    r.objective = p.objective(r.u);
    return r;
  }
  // scaled dual: l = D mu with D = diag(Q)^-1/2
  const Eigen::MatrixXd Q0 = C * Hinv * C.transpose();
  const Eigen::VectorXd q0 = C * Hinv * p.c + e;
  const Eigen::VectorXd D = Q0.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd Q = D.asDiagonal() * Q0 * D.asDiagonal();
  const Eigen::VectorXd q = D.cwiseProduct(q0);
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().maxCoeff();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m), y = mu;
  double t = 1.0;
  for (int it = 0; it < max_iterations; ++it) {
    r.iterations = it + 1;
    const Eigen::VectorXd next = (y - (Q * y + q) / L).cwiseMax(0.0);
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((y - next).dot(next - mu) > 0.0) t_next = 1.0;  // gradient-based restart
    y = next + ((t - 1.0) / t_next) * (next - mu);
    mu = next;
    t = t_next;
    const Eigen::VectorXd g = Q * mu + q;
    double pg = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) pg = std::max(pg, mu(i) > 0.0 ? std::abs(g(i)) : std::max(0.0, -g(i)));
    r.projected_gradient = pg;
    if (pg <= gradient_tol * (1.0 + q.lpNorm<Eigen::Infinity>())) break;
  }
  r.u = primal(D.cwiseProduct(mu));
  r.objective = p.objective(r.u);
  return r;
}

/// Random strictly convex QP with a known feasible point, at most `max_vars`
/// variables and `max_cons` inequality rows including finite bounds.
inline QpProblem random_feasible_qp(Rng& rng, int max_vars = 6, int max_cons = 12) {
  const int n = uniform_int(rng, 1, max_vars);
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = uniform(rng, -1.0, 1.0);
  QpProblem p;
  p.H = M * M.transpose() + uniform(rng, 0.2, 1.0) * Eigen::MatrixXd::Identity(n, n);
  p.H = 0.5 * (p.H + p.H.transpose());
  p.c.resize(n);
  for (int i = 0; i < n; ++i) p.c(i) = uniform(rng, -3.0, 3.0);
  Eigen::VectorXd feasible(n);
  for (int i = 0; i < n; ++i) feasible(i) = uniform(rng, -1.0, 1.0);

  int budget = max_cons;
  p.lb = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int i = 0; i < n && budget > 0; ++i) {
    if (uniform(rng, 0.0, 1.0) < 0.5) {
      p.lb(i) = feasible(i) - uniform(rng, 0.0, 1.5);
      --budget;
    }
    if (budget > 0 && uniform(rng, 0.0, 1.0) < 0.5) {
      p.ub(i) = feasible(i) + uniform(rng, 0.0, 1.5);
      --budget;
    }
  }
  const int rows = uniform_int(rng, 0, budget);
  p.G.resize(rows, n);
  p.d.resize(rows);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < n; ++j) p.G(r, j) = uniform(rng, -1.0, 1.0);
    const double slack = uniform(rng, 0.0, 1.0) < 0.3 ? 0.0 : uniform(rng, 0.0, 1.0);
    p.d(r) = p.G.row(r).dot(feasible) + slack;
  }
  return p;
}

}  // namespace polycbf::verify
