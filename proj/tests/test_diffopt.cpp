#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"
#include "polycbf/diffopt.hpp"
#include "polycbf/verify/acceptance.hpp"

using namespace polycbf;
using Catch::Matchers::WithinAbs;
namespace v = polycbf::verify;

namespace {

const PoseLayout kPlanar{2, 0, 1, -1, 0.0};
const PoseLayout kFull{3, 0, 1, 2, 0.0};

ConvexPolygon box(double x0, double x1, double y0, double y1) {
  return polygon_from_vertices({Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)});
}

std::vector<v::detail::GradientCase> gradient_cases(std::uint64_t seed, int count) {
  v::Rng rng(seed);
  std::vector<v::detail::GradientCase> out;
  while (static_cast<int>(out.size()) < count) {
    v::detail::GradientCase g{polygon_from_vertices(v::random_convex_vertices(rng, v::uniform_int(rng, 3, 7), 2.0, 0.5)),
                              polygon_from_vertices(v::random_convex_vertices(rng, v::uniform_int(rng, 3, 7), 3.0, 3.0)),
                              Pose2{Vec2(v::uniform(rng, -8, 8), v::uniform(rng, -8, 8)), v::uniform(rng, -3, 3)}};
    if (v::detail::non_degenerate(g)) out.push_back(std::move(g));
  }
  return out;
}

ConvexPolygon co_of(const v::detail::GradientCase& g) {
  return minkowski_difference(g.obstacle, transform_robot(g.robot_base, Pose2{}, g.pose));
}

}  // namespace

TEST_CASE("closed-form translation derivatives", "[diffopt]") {
  v::Rng rng(31);
  const auto co = polygon_from_vertices(v::random_convex_vertices(rng, 6));
  const auto d = translation_co_derivatives(co, 2, 0, 1);
  CHECK(d.source == DerivativeSource::ClosedFormTranslation);
  CHECK(d.db == -co.A());
  for (const auto& dA : d.dA) CHECK(dA.isZero(0.0));

  const auto d4 = translation_co_derivatives(co, 4, 0, 1);
  CHECK(d4.db.leftCols(2) == -co.A());
  CHECK(d4.db.rightCols(2).isZero(0.0));
}

TEST_CASE("finite differences recover the translation columns", "[diffopt][property]") {
  for (const auto& g : gradient_cases(32, 50)) {
    const auto co = co_of(g);
    const auto fd = finite_difference_co_derivatives(g.obstacle, g.robot_base, Pose2{}, g.pose, kPlanar);
    CHECK(fd.source == DerivativeSource::FiniteDifference);
    CHECK((fd.db + co.A()).lpNorm<Eigen::Infinity>() <= 1e-6);
    for (const auto& dA : fd.dA) CHECK(dA.lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("orientation column of a rotating square", "[diffopt]") {
  const auto robot = box(-0.5, 0.5, -0.5, 0.5);
  const auto obstacle = polygon_from_vertices({Vec2(3, -1), Vec2(4.5, 0.2), Vec2(2.6, 1.7)});
  const Pose2 pose{Vec2(0.2, 0.1), 0.0};
  // triangle edges are not parallel to the square's at this pose
  const auto co = minkowski_difference(obstacle, transform_robot(robot, Pose2{}, pose));
  REQUIRE(co.edge_count() == 7);
  const auto d = finite_difference_co_derivatives(obstacle, robot, Pose2{}, pose, kFull);
  const auto& ids = co.edge_ids();
  for (int k = 0; k < co.edge_count(); ++k) {
    const Vec2 a = co.normal(k);
    const bool from_robot = ids[static_cast<std::size_t>(k)] >= obstacle.edge_count();
    // a robot row turns with the robot: d/dtheta of R(theta) n is the perpendicular (-n_y, n_x)
    const Vec2 expected = from_robot ? Vec2(-a.y(), a.x()) : Vec2::Zero();
    CHECK((d.dA[2].row(k).transpose() - expected).norm() <= 1e-6);
  }
  // the mixed variant shares the orientation column and has exact translation columns
  const auto mixed = co_derivatives(co, obstacle, robot, Pose2{}, pose, kFull);
  CHECK(mixed.source == DerivativeSource::Mixed);
  CHECK(mixed.db.leftCols(2) == -co.A());
  CHECK((mixed.db.col(2) - d.db.col(2)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("parallel edges at the nominal pose change the active set", "[diffopt]") {
  const auto robot = box(-0.5, 0.5, -0.5, 0.5);
  const auto obstacle = box(2, 3, -1, 1);
  CHECK_THROWS_AS(finite_difference_co_derivatives(obstacle, robot, Pose2{}, Pose2{}, kFull), ActiveSetChange);
  // translation alone keeps the rows
  CHECK_NOTHROW(finite_difference_co_derivatives(obstacle, robot, Pose2{}, Pose2{}, kPlanar));
}

TEST_CASE("single active edge under translation", "[diffopt]") {
  const auto co = box(1, 3, -1, 1);
  const auto r = project_origin(co);
  const auto sens = kkt_jacobian(co, r, translation_co_derivatives(co, kPlanar));
  const Vec2 a(-1, 0);
  CHECK((sens.dz_dx - (-a * a.transpose())).norm() <= 1e-12);

  // distance falls as the robot moves toward the obstacle (+x), i.e. dh/dp = a^T
  const auto g = cbf_gradient(r, sens.dz_dx, 0.0);
  CHECK((g.dh_dx - a.transpose()).norm() <= 1e-12);
  CHECK(g.valid);
  CHECK_THAT(g.h, WithinAbs(1.0, 1e-15));
  CHECK_THAT(cbf_gradient(r, sens.dz_dx, 0.25).h, WithinAbs(0.75, 1e-15));
}

TEST_CASE("vertex contact moves rigidly with the robot", "[diffopt]") {
  const auto co = box(1, 2, 1, 2);
  const auto r = project_origin(co);
  REQUIRE(r.active_rows.size() == 2);
  const auto sens = kkt_jacobian(co, r, translation_co_derivatives(co, kPlanar));
  CHECK((sens.dz_dx + Eigen::Matrix2d::Identity()).norm() <= 1e-12);
}

TEST_CASE("KKT Jacobian matches finite differences of the optimizer", "[diffopt][property]") {
  for (const auto& g : gradient_cases(33, 100)) {
    const auto co = co_of(g);
    const auto sdf = signed_distance(co);
    const auto [dz2, dh2] = v::detail::reference_jacobians(g, 2);
    const auto [dz3, dh3] = v::detail::reference_jacobians(g, 3);

    const auto closed = kkt_jacobian(co, sdf, translation_co_derivatives(co, kPlanar));
    CHECK(v::detail::relative_error(closed.dz_dx, dz2) <= 1e-4);
    CHECK(v::detail::relative_error(cbf_gradient(sdf, closed.dz_dx, 0.0).dh_dx, dh2) <= 1e-4);

    const auto full = kkt_jacobian(co, sdf, finite_difference_co_derivatives(g.obstacle, g.robot_base, Pose2{}, g.pose, kFull));
    CHECK(v::detail::relative_error(full.dz_dx, dz3) <= 1e-4);
    CHECK(v::detail::relative_error(cbf_gradient(sdf, full.dz_dx, 0.0).dh_dx, dh3) <= 1e-4);
  }
}

TEST_CASE("inactive rows do not change the Jacobian", "[diffopt][property]") {
  for (const auto& g : gradient_cases(34, 100)) {
    const auto co = co_of(g);
    const auto sdf = signed_distance(co);
    const auto derivs = co_derivatives(co, g.obstacle, g.robot_base, Pose2{}, g.pose, kFull);
    const auto active = kkt_jacobian(co, sdf, derivs, KktRows::Active);
    const auto all = kkt_jacobian(co, sdf, derivs, KktRows::All);
    CHECK((active.dz_dx - all.dz_dx).norm() <= 1e-9 * (1.0 + active.dz_dx.norm()));
    CHECK(all.rows.size() == static_cast<std::size_t>(co.edge_count()));
    // multipliers of inactive rows stay at zero to first order
    for (std::size_t i = 0; i < all.rows.size(); ++i) {
      if (sdf.duals(all.rows[i]) == 0.0) CHECK(all.dlambda_dx.row(static_cast<Eigen::Index>(i)).norm() <= 1e-9);
    }
  }
}

TEST_CASE("position gradient has unit norm on the distance branch", "[diffopt][property]") {
  for (const auto& g : gradient_cases(35, 100)) {
    const auto co = co_of(g);
    const auto sdf = signed_distance(co);
    const auto sens = kkt_jacobian(co, sdf, translation_co_derivatives(co, kPlanar));
    CHECK_THAT(cbf_gradient(sdf, sens.dz_dx, 0.0).dh_dx.norm(), WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("penetration gradient with a unique active face", "[diffopt]") {
  // CO = [-1.5, 1] x [-1.5, 1.5]; the +x face is closest
  const v::detail::GradientCase g{box(-0.5, 0.5, -0.5, 0.5), box(-1, 0.5, -1, 1), Pose2{}};
  const auto co = co_of(g);
  const auto sdf = signed_distance(co);
  REQUIRE(sdf.branch == Branch::Penetration);
  REQUIRE_FALSE(sdf.tied);
  CHECK_THAT(sdf.value, WithinAbs(-1.0, 1e-15));
  const auto sens = kkt_jacobian(co, sdf, translation_co_derivatives(co, kPlanar));
  const auto grad = cbf_gradient(sdf, sens.dz_dx, 0.0);
  CHECK_THAT(grad.dh_dx.norm(), WithinAbs(1.0, 1e-12));
  CHECK((grad.dh_dx - Eigen::RowVector2d(1, 0)).norm() <= 1e-12);
  const auto [dz_ref, dh_ref] = v::detail::reference_jacobians(g, 2);
  CHECK((grad.dh_dx - dh_ref).norm() <= 1e-6);
}

TEST_CASE("penetration gradient including orientation", "[diffopt][property]") {
  v::Rng rng(36);
  int done = 0;
  while (done < 50) {
    v::detail::GradientCase g{polygon_from_vertices(v::random_convex_vertices(rng, v::uniform_int(rng, 3, 7), 2.0, 0.5)),
                              polygon_from_vertices(v::random_convex_vertices(rng, v::uniform_int(rng, 3, 7), 3.0, 0.5)),
                              Pose2{Vec2(v::uniform(rng, -1, 1), v::uniform(rng, -1, 1)), v::uniform(rng, -3, 3)}};
    const auto co = co_of(g);
    const auto sdf = signed_distance(co);
    if (sdf.branch != Branch::Penetration || sdf.value > -1e-2) continue;
    // a runner-up face within 1e-4 could take over inside the difference stencil
    Eigen::VectorXd b = co.b();
    b(sdf.active_rows[0]) = std::numeric_limits<double>::infinity();
    if (b.minCoeff() + sdf.value < 1e-3) continue;
    const auto sens = kkt_jacobian(co, sdf, co_derivatives(co, g.obstacle, g.robot_base, Pose2{}, g.pose, kFull));
    const auto [dz_ref, dh_ref] = v::detail::reference_jacobians(g, 3);
    CHECK(v::detail::relative_error(sens.dz_dx, dz_ref) <= 1e-4);
    CHECK(v::detail::relative_error(cbf_gradient(sdf, sens.dz_dx, 0.0).dh_dx, dh_ref) <= 1e-4);
    ++done;
  }
}

TEST_CASE("undefined gradients are reported", "[diffopt]") {
  SECTION("touching contact") {
    const auto co = box(0, 2, -1, 1);
    const auto sdf = signed_distance(co);
    const auto sens = kkt_jacobian(co, sdf, translation_co_derivatives(co, kPlanar));
    CHECK_THROWS_AS(cbf_gradient(sdf, sens.dz_dx, 0.0), ContactSingularity);
  }
  SECTION("tied penetration faces") {
    const auto co = box(-1, 1, -1, 1);
    CHECK_THROWS_AS(kkt_jacobian(co, signed_distance(co), translation_co_derivatives(co, kPlanar)), SingularKkt);
  }
  SECTION("derivatives for a different CO") {
    const auto co = box(1, 3, -1, 1);
    const auto other = polygon_from_vertices({Vec2(1, 0), Vec2(2, -1), Vec2(2, 1)});
    CHECK_THROWS_AS(kkt_jacobian(co, project_origin(co), translation_co_derivatives(other, kPlanar)), SingularKkt);
  }
  SECTION("all three share a base class") {
    CHECK_THROWS_AS(throw ActiveSetChange("x"), GradientUndefined);
    CHECK_THROWS_AS(throw SingularKkt("x"), GradientUndefined);
    CHECK_THROWS_AS(throw ContactSingularity("x"), GradientUndefined);
  }
}
