#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"
#include "polycbf/sdf.hpp"
#include "polycbf/verify/oracles.hpp"

using namespace polycbf;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace v = polycbf::verify;

namespace {

ConvexPolygon box(double x0, double x1, double y0, double y1) {
  return polygon_from_vertices({Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)});
}

struct Pair {
  std::vector<Vec2> robot;
  std::vector<Vec2> obstacle;
};

Pair random_pair(v::Rng& rng, double spread) {
  return {v::random_convex_vertices(rng, v::uniform_int(rng, 3, 8), 2.5, spread),
          v::random_convex_vertices(rng, v::uniform_int(rng, 3, 8), 2.5, spread)};
}

void check_kkt(const ConvexPolygon& co, const SdfResult& r) {
  REQUIRE(r.branch == Branch::Distance);
  CHECK_THAT(r.value, WithinAbs(r.z_star.norm(), 1e-15));
  CHECK((co.A() * r.z_star - co.b()).maxCoeff() <= 1e-9);
  CHECK((co.A() * r.z_star - co.b()).maxCoeff() >= -1e-9);  // on the boundary
  CHECK(r.duals.minCoeff() >= 0.0);
  const Vec2 station = 2.0 * r.z_star + co.A().transpose() * r.duals;
  CHECK(station.lpNorm<Eigen::Infinity>() <= 1e-8);
  const Eigen::VectorXd slack = co.b() - co.A() * r.z_star;
  CHECK(r.duals.cwiseProduct(slack).lpNorm<Eigen::Infinity>() <= 1e-8);
}

}  // namespace

TEST_CASE("projection onto a face", "[sdf]") {
  const auto co = box(1, 3, -1, 1);
  const auto r = project_origin(co);
  CHECK(r.branch == Branch::Distance);
  CHECK(r.z_star.isApprox(Vec2(1, 0)));
  CHECK_THAT(r.value, WithinAbs(1.0, 1e-15));
  REQUIRE(r.active_rows.size() == 1);
  CHECK(co.normal(r.active_rows[0]).isApprox(Vec2(-1, 0)));
  CHECK_THAT(r.duals(r.active_rows[0]), WithinAbs(2.0, 1e-15));
  check_kkt(co, r);
}

TEST_CASE("projection onto a vertex", "[sdf]") {
  const auto co = box(1, 2, 1, 2);
  const auto r = project_origin(co);
  CHECK(r.z_star.isApprox(Vec2(1, 1)));
  CHECK_THAT(r.value, WithinAbs(std::numbers::sqrt2, 1e-15));
  CHECK(r.active_rows.size() == 2);
  check_kkt(co, r);
}

TEST_CASE("projection with the origin inside is an error", "[sdf]") {
  CHECK_THROWS_AS(project_origin(box(-1, 1, -1, 1)), OriginInside);
  CHECK_THROWS_AS(project_origin(box(0, 1, -1, 1)), OriginInside);  // touching
}

TEST_CASE("depth of a centered square breaks the tie to row 0", "[sdf]") {
  const auto co = box(-1, 1, -1, 1);
  const auto r = penetration_depth(co);
  CHECK(r.branch == Branch::Penetration);
  CHECK_THAT(r.value, WithinAbs(-1.0, 1e-15));
  REQUIRE(r.active_rows.size() == 1);
  CHECK(r.active_rows[0] == 0);
  CHECK(r.tied);
  CHECK(r.z_star.isApprox(co.normal(0)));
  CHECK(r.duals.sum() == 1.0);
}

TEST_CASE("depth toward the nearest face", "[sdf]") {
  const auto r = penetration_depth(box(-0.5, 1.5, -1, 1));
  CHECK_THAT(r.value, WithinAbs(-0.5, 1e-15));
  CHECK(r.z_star.isApprox(Vec2(-0.5, 0)));
  CHECK_FALSE(r.tied);
}

TEST_CASE("depth with the origin outside is an error", "[sdf]") {
  CHECK_THROWS_AS(penetration_depth(box(1, 3, -1, 1)), OriginOutside);
}

TEST_CASE("touching contact has value zero on the depth branch", "[sdf]") {
  const auto r = signed_distance(box(0, 2, -1, 1));
  CHECK(r.branch == Branch::Penetration);
  CHECK(r.value == 0.0);
  CHECK(r.z_star.norm() == 0.0);
}

TEST_CASE("signed distance of squares", "[sdf]") {
  const auto unit = box(-0.5, 0.5, -0.5, 0.5);
  CHECK_THAT(signed_distance(unit, unit).value, WithinAbs(-1.0, 1e-15));
  for (double g : {0.01, 0.3, 2.0}) {
    CHECK_THAT(signed_distance(unit, box(0.5 + g, 1.5 + g, -0.5, 0.5)).value, WithinAbs(g, 1e-12));
  }
}

TEST_CASE("distance branch matches the segment-pair oracle", "[sdf][property]") {
  v::Rng rng(21);
  int done = 0;
  while (done < 1000) {
    const auto [rv, ov] = random_pair(rng, 8.0);
    if (!v::sat_disjoint(rv, ov)) continue;
    const auto co = minkowski_difference(polygon_from_vertices(ov), polygon_from_vertices(rv));
    const auto r = signed_distance(co);
    REQUIRE(r.branch == Branch::Distance);
    CHECK_THAT(r.value, WithinAbs(v::segment_pair_distance(rv, ov), 1e-9));
    check_kkt(co, r);
    ++done;
  }
}

TEST_CASE("penetration branch matches boundary sampling", "[sdf][property]") {
  v::Rng rng(22);
  int done = 0;
  while (done < 200) {
    const auto [rv, ov] = random_pair(rng, 1.5);
    if (v::sat_disjoint(rv, ov)) continue;
    const auto co = minkowski_difference(polygon_from_vertices(ov), polygon_from_vertices(rv));
    const auto r = signed_distance(co);
    REQUIRE(r.branch == Branch::Penetration);
    CHECK(r.value <= 0.0);
    CHECK_THAT(-r.value, WithinAbs(v::boundary_sampled_distance(co.vertices()), 1e-4));
    CHECK_THAT(co.normal(r.active_rows[0]).dot(r.z_star), WithinAbs(co.offset(r.active_rows[0]), 1e-12));
    ++done;
  }
}

TEST_CASE("sign agrees with the separating-axis test", "[sdf][property]") {
  v::Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [rv, ov] = random_pair(rng, 3.0);
    const auto r = signed_distance(polygon_from_vertices(rv), polygon_from_vertices(ov));
    CHECK((r.value > 0.0) == v::sat_disjoint(rv, ov));
  }
}

TEST_CASE("projection is independent of row order", "[sdf][property]") {
  v::Rng rng(24);
  int done = 0;
  while (done < 300) {
    const auto [rv, ov] = random_pair(rng, 8.0);
    if (!v::sat_disjoint(rv, ov)) continue;
    const auto co = minkowski_difference(polygon_from_vertices(ov), polygon_from_vertices(rv));
    const auto base = project_origin(co);
    const auto shifted = project_origin(co.rotated_rows(v::uniform_int(rng, 1, co.edge_count() - 1)));
    CHECK((shifted.z_star - base.z_star).norm() <= 1e-9);
    ++done;
  }
}

TEST_CASE("signed distance is continuous through contact", "[sdf][property]") {
  const auto obstacle = polygon_from_vertices({Vec2(0, -1), Vec2(1.5, -0.5), Vec2(1, 1.2), Vec2(-0.3, 0.4)});
  const auto robot = polygon_from_vertices({Vec2(-0.3, -0.2), Vec2(0.4, -0.3), Vec2(0.1, 0.35)});
  const Vec2 dir = Vec2(1, 0.2).normalized();
  double prev = 0.0;
  double max_jump = 0.0;
  bool saw_outside = false, saw_inside = false;
  for (int i = 0; i <= 60000; ++i) {
    const Vec2 p = Vec2(-3, -0.6) + (i * 1e-4) * dir;
    const auto r = signed_distance(transform_robot(robot, Pose2{}, Pose2{p, 0.3}), obstacle);
    if (i > 0) max_jump = std::max(max_jump, std::abs(r.value - prev) - 1e-4);
    saw_outside = saw_outside || r.value > 0.0;
    saw_inside = saw_inside || r.value < 0.0;
    prev = r.value;
  }
  CHECK(saw_outside);
  CHECK(saw_inside);
  // sd is 1-Lipschitz in translation, so consecutive samples differ by at most the step
  CHECK(max_jump <= 1e-6);
}
