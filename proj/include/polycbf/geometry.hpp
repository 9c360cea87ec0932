#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polycbf/errors.hpp"

namespace polycbf {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
/// Row k holds the outward unit normal of edge k.
using HalfspaceMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Two edge normals closer than this (radians) are treated as parallel.
inline constexpr double kParallelTolerance = 1e-9;
/// Vertex/halfspace consistency tolerance.
inline constexpr double kContainmentTolerance = 1e-9;

struct Pose2 {
  Vec2 p = Vec2::Zero();
  double theta = 0.0;  // unwrapped
};

/// Where the planar pose lives inside a state vector. theta_index < 0 means the
/// orientation is not a state component and stays at the fixed value.
struct PoseLayout {
  int n_state = 2;
  int x_index = 0;
  int y_index = 1;
  int theta_index = -1;
  double fixed_theta = 0.0;

  [[nodiscard]] Pose2 pose_of(const Eigen::VectorXd& x) const {
    Pose2 pose;
    pose.p = Vec2(x(x_index), x(y_index));
    pose.theta = theta_index >= 0 ? x(theta_index) : fixed_theta;
    return pose;
  }
};

inline Mat2 rotation(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Signed angle from direction a to direction b, in (-pi, pi].
inline double turn_angle(const Vec2& a, const Vec2& b) { return std::atan2(cross2(a, b), a.dot(b)); }

inline bool lex_less(const Vec2& a, const Vec2& b) {
  return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
}

/// Convex polygon held in both vertex and halfspace form.
///
/// Vertices run counter-clockwise; row k of (A, b) is the supporting line of
/// the edge from vertex k to vertex k+1. Each row also carries an integer edge
/// id that survives rigid transforms and canonical re-ordering, which is how
/// rows of two nearby configuration obstacles are matched up.
///
/// Instances are immutable. The factory functions below return the canonical
/// ordering (first vertex lexicographically smallest); the public constructor
/// accepts any cyclic rotation and only validates consistency.
class ConvexPolygon {
 public:
  ConvexPolygon(std::vector<Vec2> vertices, HalfspaceMatrix A, Eigen::VectorXd b,
                std::vector<int> edge_ids)
      : vertices_(std::move(vertices)), A_(std::move(A)), b_(std::move(b)), ids_(std::move(edge_ids)) {
    const auto n = static_cast<Eigen::Index>(vertices_.size());
    if (n < 3 || A_.rows() != n || b_.size() != n || static_cast<Eigen::Index>(ids_.size()) != n) {
      throw DegenerateInput("polygon parts have inconsistent sizes or fewer than 3 edges");
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(A_.row(k).norm() - 1.0) > 1e-9) {
        throw DegenerateInput("halfspace normals must be unit length");
      }
    }
  }

  [[nodiscard]] int edge_count() const { return static_cast<int>(vertices_.size()); }
  [[nodiscard]] const std::vector<Vec2>& vertices() const { return vertices_; }
  [[nodiscard]] const Vec2& vertex(int k) const { return vertices_[static_cast<std::size_t>(wrap(k))]; }
  [[nodiscard]] const HalfspaceMatrix& A() const { return A_; }
  [[nodiscard]] const Eigen::VectorXd& b() const { return b_; }
  [[nodiscard]] Vec2 normal(int k) const { return A_.row(wrap(k)).transpose(); }
  [[nodiscard]] double offset(int k) const { return b_(wrap(k)); }
  [[nodiscard]] const std::vector<int>& edge_ids() const { return ids_; }

  [[nodiscard]] int wrap(int k) const {
    const int n = edge_count();
    return ((k % n) + n) % n;
  }

  [[nodiscard]] bool contains(const Vec2& y, double tol = kContainmentTolerance) const {
    return ((A_ * y - b_).array() <= tol).all();
  }

  [[nodiscard]] double area() const {
    double twice = 0.0;
    for (int k = 0; k < edge_count(); ++k) twice += cross2(vertex(k), vertex(k + 1));
    return 0.5 * twice;
  }

  [[nodiscard]] Vec2 centroid() const {
    Vec2 acc = Vec2::Zero();
    double twice = 0.0;
    for (int k = 0; k < edge_count(); ++k) {
      const double w = cross2(vertex(k), vertex(k + 1));
      acc += w * (vertex(k) + vertex(k + 1));
      twice += w;
    }
    return acc / (3.0 * twice);
  }

  /// Same polygon with rows and vertices cyclically shifted by `shift`.
  [[nodiscard]] ConvexPolygon rotated_rows(int shift) const {
    const int n = edge_count();
    std::vector<Vec2> v(static_cast<std::size_t>(n));
    HalfspaceMatrix a(n, 2);
    Eigen::VectorXd bb(n);
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const int src = wrap(k + shift);
      v[static_cast<std::size_t>(k)] = vertices_[static_cast<std::size_t>(src)];
      a.row(k) = A_.row(src);
      bb(k) = b_(src);
      ids[static_cast<std::size_t>(k)] = ids_[static_cast<std::size_t>(src)];
    }
    return ConvexPolygon(std::move(v), std::move(a), std::move(bb), std::move(ids));
  }

  /// Canonical rotation: first vertex is the lexicographically smallest.
  [[nodiscard]] ConvexPolygon canonical() const {
    int start = 0;
    for (int k = 1; k < edge_count(); ++k) {
      if (lex_less(vertex(k), vertex(start))) start = k;
    }
    return start == 0 ? *this : rotated_rows(start);
  }

 private:
  std::vector<Vec2> vertices_;
  HalfspaceMatrix A_;
  Eigen::VectorXd b_;
  std::vector<int> ids_;
};

namespace detail {

inline Vec2 edge_normal(const Vec2& from, const Vec2& to) {
  const Vec2 d = to - from;
  return Vec2(d.y(), -d.x()).normalized();
}

/// Direction angle of the edge whose outward normal is n, mapped to [0, 2pi).
inline double edge_angle(const Vec2& n) {
  double a = std::atan2(n.x(), -n.y());
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a;
}

inline bool parallel(const Vec2& n1, const Vec2& n2) {
  return std::abs(turn_angle(n1, n2)) <= kParallelTolerance;
}

/// Drops vertices whose two incident edges are parallel. Works on a cyclic
/// list of (vertex, normal, id) where entry k describes the edge leaving vertex k.
struct EdgeRecord {
  Vec2 start;
  Vec2 normal;
  int id;
};

inline std::vector<EdgeRecord> drop_straight_vertices(std::vector<EdgeRecord> edges) {
  bool changed = true;
  while (changed && edges.size() > 3) {
    changed = false;
    const std::size_t n = edges.size();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t prev = (k + n - 1) % n;
      if (parallel(edges[prev].normal, edges[k].normal)) {
        // the edge entering vertex k absorbs the one leaving it
        edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(k));
        changed = true;
        break;
      }
    }
  }
  return edges;
}

inline ConvexPolygon assemble(const std::vector<EdgeRecord>& edges) {
  const auto n = static_cast<Eigen::Index>(edges.size());
  std::vector<Vec2> v;
  v.reserve(edges.size());
  HalfspaceMatrix a(n, 2);
  Eigen::VectorXd b(n);
  std::vector<int> ids;
  ids.reserve(edges.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& e = edges[static_cast<std::size_t>(k)];
    v.push_back(e.start);
    a.row(k) = e.normal.transpose();
    b(k) = e.normal.dot(e.start);
    ids.push_back(e.id);
  }
  return ConvexPolygon(std::move(v), std::move(a), std::move(b), std::move(ids)).canonical();
}

}  // namespace detail

/// Convex hull of `points` as a canonical polygon. Collinear and duplicate
/// points are discarded; fewer than three hull vertices or zero area throws.
inline ConvexPolygon polygon_from_vertices(std::span<const Vec2> points) {
  if (points.size() < 3) throw DegenerateInput("need at least 3 points");
  std::vector<Vec2> pts(points.begin(), points.end());
  for (const auto& p : pts) {
    if (!p.allFinite()) throw DegenerateInput("non-finite vertex");
  }
  std::sort(pts.begin(), pts.end(), lex_less);

  // Andrew's monotone chain, strictly convex turns only
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const auto& p = pts[i];
    while (k >= lower && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k > 0 ? k - 1 : 0);
  if (hull.size() < 3) throw DegenerateInput("hull has fewer than 3 vertices");

  double scale = 0.0;
  for (const auto& p : hull) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  double twice_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) twice_area += cross2(hull[i], hull[(i + 1) % hull.size()]);
  if (!(twice_area > 1e-12 * std::max(1.0, scale * scale))) throw DegenerateInput("zero-area polygon");

  std::vector<detail::EdgeRecord> edges;
  edges.reserve(hull.size());
  for (std::size_t i = 0; i < hull.size(); ++i) {
    edges.push_back({hull[i], detail::edge_normal(hull[i], hull[(i + 1) % hull.size()]), 0});
  }
  edges = detail::drop_straight_vertices(std::move(edges));
  // recompute normals across any dropped vertex
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i].normal = detail::edge_normal(edges[i].start, edges[(i + 1) % edges.size()].start);
  }
  if (edges.size() < 3) throw DegenerateInput("hull has fewer than 3 vertices");

  auto poly = detail::assemble(edges);
  // ids follow canonical order for a freshly built polygon
  std::vector<int> ids(static_cast<std::size_t>(poly.edge_count()));
  for (int i = 0; i < poly.edge_count(); ++i) ids[static_cast<std::size_t>(i)] = i;
  return ConvexPolygon(poly.vertices(), poly.A(), poly.b(), std::move(ids));
}

inline ConvexPolygon polygon_from_vertices(std::initializer_list<Vec2> points) {
  return polygon_from_vertices(std::span<const Vec2>(points.begin(), points.size()));
}

/// Robot shape at `pose`, given its shape `base` at `base_pose`:
/// vertices map as v -> R(theta - theta0) (v - p0) + p, and rows as
/// A(x) = A R^T, b(x) = b + A(x) p - A p0.
inline ConvexPolygon transform_robot(const ConvexPolygon& base, const Pose2& base_pose, const Pose2& pose) {
  const double dtheta = pose.theta - base_pose.theta;
  const int n = base.edge_count();
  std::vector<Vec2> v;
  v.reserve(static_cast<std::size_t>(n));
  HalfspaceMatrix a;
  if (dtheta == 0.0) {
    for (const auto& q : base.vertices()) v.push_back(q - base_pose.p + pose.p);
    a = base.A();
  } else {
    const Mat2 r = rotation(dtheta);
    for (const auto& q : base.vertices()) v.push_back(r * (q - base_pose.p) + pose.p);
    a = base.A() * r.transpose();
    // keep rows unit-norm to machine precision
    for (int k = 0; k < n; ++k) a.row(k).normalize();
  }
  Eigen::VectorXd b = base.b() + a * pose.p - base.A() * base_pose.p;
  return ConvexPolygon(std::move(v), std::move(a), std::move(b), base.edge_ids()).canonical();
}

/// Point reflection through the origin, {-p | p in poly}.
inline ConvexPolygon reflect(const ConvexPolygon& poly) {
  std::vector<Vec2> v;
  v.reserve(poly.vertices().size());
  for (const auto& q : poly.vertices()) v.push_back(-q);
  return ConvexPolygon(std::move(v), -poly.A(), poly.b(), poly.edge_ids()).canonical();
}

/// Configuration obstacle O (+) (-R) by merging the two edge sequences in
/// order of edge direction. Parallel edges collapse into one row, keeping the
/// obstacle's normal and id. Robot edge ids are offset by the obstacle's edge
/// count so every row of the result names the edge it came from.
inline ConvexPolygon minkowski_difference(const ConvexPolygon& obstacle, const ConvexPolygon& robot) {
  const ConvexPolygon neg = reflect(robot);
  const int lo = obstacle.edge_count();
  const int lr = neg.edge_count();

  auto first_edge = [](const ConvexPolygon& p) {
    int best = 0;
    double best_angle = detail::edge_angle(p.normal(0));
    for (int k = 1; k < p.edge_count(); ++k) {
      const double a = detail::edge_angle(p.normal(k));
      if (a < best_angle) {
        best_angle = a;
        best = k;
      }
    }
    return best;
  };
  const int so = first_edge(obstacle);
  const int sr = first_edge(neg);

  std::vector<detail::EdgeRecord> edges;
  edges.reserve(static_cast<std::size_t>(lo + lr));
  int i = 0;
  int j = 0;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  while (i < lo || j < lr) {
    const int oi = obstacle.wrap(so + i);
    const int rj = neg.wrap(sr + j);
    const Vec2 start = obstacle.vertex(oi) + neg.vertex(rj);
    const double ao = i < lo ? detail::edge_angle(obstacle.normal(oi)) : kInf;
    const double ar = j < lr ? detail::edge_angle(neg.normal(rj)) : kInf;
    if (i < lo && j < lr && detail::parallel(obstacle.normal(oi), neg.normal(rj))) {
      edges.push_back({start, obstacle.normal(oi), obstacle.edge_ids()[static_cast<std::size_t>(oi)]});
      ++i;
      ++j;
    } else if (ao <= ar) {
      edges.push_back({start, obstacle.normal(oi), obstacle.edge_ids()[static_cast<std::size_t>(oi)]});
      ++i;
    } else {
      edges.push_back({start, neg.normal(rj), lo + neg.edge_ids()[static_cast<std::size_t>(rj)]});
      ++j;
    }
  }
  return detail::assemble(detail::drop_straight_vertices(std::move(edges)));
}

}  // namespace polycbf
