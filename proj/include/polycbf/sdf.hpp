#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/errors.hpp"
#include "polycbf/geometry.hpp"

namespace polycbf {

enum class Branch { Distance, Penetration };

inline const char* to_string(Branch b) { return b == Branch::Distance ? "distance" : "penetration"; }

/// Signed distance between the origin and a configuration obstacle, together
/// with the optimizer data needed to differentiate it.
struct SdfResult {
  double value = 0.0;          // +||z*|| outside, -||z*|| inside
  Vec2 z_star = Vec2::Zero();  // critical point on the boundary
  Eigen::VectorXd duals;       // one entry per CO row, zero off the active set
  std::vector<int> active_rows;
  Branch branch = Branch::Distance;
  /// Penetration only: more than one row attains the minimum offset.
  bool tied = false;
};

/// Multipliers below this are treated as zero when classifying a vertex contact.
inline constexpr double kWeakDualTolerance = 1e-12;
inline constexpr double kPenetrationTieTolerance = 1e-12;

/// Euclidean projection of the origin onto `co` (origin strictly outside).
///
/// The closest point is found edge by edge. Duals then come from the
/// stationarity condition 2 z + A_act^T lambda = 0 restricted to the rows tight
/// at z: one row for contact inside an edge, two at a vertex. A vertex whose
/// second multiplier vanishes is reported as contact with the remaining edge.
inline SdfResult project_origin(const ConvexPolygon& co) {
  if (co.b().minCoeff() >= 0.0) throw OriginInside("origin lies in the configuration obstacle");
  const int n = co.edge_count();

  double best = std::numeric_limits<double>::infinity();
  int best_edge = 0;
  double best_t = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vec2& v0 = co.vertex(k);
    const Vec2 d = co.vertex(k + 1) - v0;
    const double t = std::clamp(-v0.dot(d) / d.squaredNorm(), 0.0, 1.0);
    const double dist2 = (v0 + t * d).squaredNorm();
    if (dist2 < best) {
      best = dist2;
      best_edge = k;
      best_t = t;
    }
  }

  SdfResult r;
  r.branch = Branch::Distance;
  r.duals = Eigen::VectorXd::Zero(n);

  auto edge_contact = [&](int k, const Vec2& z) {
    r.z_star = z;
    r.active_rows = {k};
    r.duals(k) = std::max(0.0, -2.0 * co.normal(k).dot(z));
  };

  if (best_t > 0.0 && best_t < 1.0) {
    const Vec2& v0 = co.vertex(best_edge);
    edge_contact(best_edge, v0 + best_t * (co.vertex(best_edge + 1) - v0));
  } else {
    // vertex contact: the vertex sits between rows `before` and `after`
    const int vk = best_t <= 0.0 ? best_edge : co.wrap(best_edge + 1);
    const int before = co.wrap(vk - 1);
    const int after = vk;
    const Vec2 z = co.vertex(vk);
    Mat2 m;
    m.col(0) = co.normal(before);
    m.col(1) = co.normal(after);
    const Vec2 lambda = m.partialPivLu().solve(-2.0 * z);
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (lambda(0) <= kWeakDualTolerance * scale) {
      edge_contact(after, z);
    } else if (lambda(1) <= kWeakDualTolerance * scale) {
      edge_contact(before, z);
    } else {
      r.z_star = z;
      r.active_rows = {std::min(before, after), std::max(before, after)};
      r.duals(before) = lambda(0);
      r.duals(after) = lambda(1);
    }
  }
  r.value = r.z_star.norm();
  return r;
}

/// Depth of the origin inside `co`. With unit normals the depth LP
/// max s s.t. s <= b_k has the closed-form optimum s* = min_k b_k; the first
/// minimizing row is the active one and z* is the origin projected onto it.
inline SdfResult penetration_depth(const ConvexPolygon& co) {
  Eigen::Index k = 0;
  const double s = co.b().minCoeff(&k);
  if (s < 0.0) throw OriginOutside("origin lies outside the configuration obstacle");

  SdfResult r;
  r.branch = Branch::Penetration;
  r.duals = Eigen::VectorXd::Zero(co.edge_count());
  r.duals(k) = 1.0;
  r.active_rows = {static_cast<int>(k)};
  r.z_star = s * co.normal(static_cast<int>(k));
  r.value = s == 0.0 ? 0.0 : -s;
  int near_min = 0;
  for (Eigen::Index i = 0; i < co.b().size(); ++i) {
    if (co.b()(i) <= s + kPenetrationTieTolerance) ++near_min;
  }
  r.tied = near_min > 1;
  return r;
}

/// Dispatches on origin membership. Touching contact (min b == 0) takes the
/// penetration branch with value 0.
inline SdfResult signed_distance(const ConvexPolygon& co) {
  return co.b().minCoeff() < 0.0 ? project_origin(co) : penetration_depth(co);
}

inline SdfResult signed_distance(const ConvexPolygon& robot, const ConvexPolygon& obstacle) {
  return signed_distance(minkowski_difference(obstacle, robot));
}

}  // namespace polycbf
