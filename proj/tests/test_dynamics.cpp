#include <cmath>
#include <limits>
#include <numbers>

#include "catch_amalgamated.hpp"
#include "polycbf/dynamics.hpp"

using namespace polycbf;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// unicycle with constant turn rate w and speed 1, starting at the origin heading 0
Eigen::Vector2d circle(double w, double t) { return {std::sin(w * t) / w, (1.0 - std::cos(w * t)) / w}; }

double circle_error(double dt) {
  const auto m = unicycle();
  Eigen::VectorXd x = vec({0, 0, 0, 1});
  const auto u = vec({1, 0});
  const int steps = static_cast<int>(std::lround(4.0 / dt));
  for (int k = 0; k < steps; ++k) x = rk4_step(m, x, u, dt, 1);
  return (x.head<2>() - circle(1.0, steps * dt)).norm();
}

}  // namespace

TEST_CASE("single integrator fields", "[dynamics]") {
  const auto m = single_integrator();
  CHECK(m.n == 2);
  CHECK(m.q == 2);
  CHECK(m.f(vec({3, 4})).isZero(0.0));
  CHECK(m.g(vec({-7, 2})).isIdentity(0.0));
  CHECK(m.co_dependent_indices == std::vector<int>{0, 1});
  const auto pose = m.pose_of(vec({1.5, -2}));
  CHECK(pose.p == Vec2(1.5, -2));
  CHECK(pose.theta == 0.0);
  CHECK(single_integrator(0.7).pose_of(vec({0, 0})).theta == 0.7);
}

TEST_CASE("unicycle fields", "[dynamics]") {
  const auto m = unicycle();
  CHECK(m.n == 4);
  CHECK(m.q == 2);
  CHECK(m.f(vec({0, 0, 0, 2})).isApprox(vec({2, 0, 0, 0})));
  CHECK((m.f(vec({0, 0, std::numbers::pi / 2, 1})) - vec({0, 1, 0, 0})).norm() <= 1e-15);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 2);
  g.bottomRows(2).setIdentity();
  CHECK(m.g(vec({1, 2, 3, 4})) == g);
  CHECK(m.co_dependent_indices == std::vector<int>{0, 1, 2});
  const auto pose = m.pose_of(vec({1, 2, 7.0, 0.5}));
  CHECK(pose.p == Vec2(1, 2));
  CHECK(pose.theta == 7.0);  // not wrapped
}

TEST_CASE("RK4 is exact on linear dynamics", "[dynamics]") {
  const auto m = single_integrator();
  const auto x = rk4_step(m, vec({0, 0}), vec({1, 0}), 0.01);
  CHECK_THAT(x(0), WithinAbs(0.01, 1e-17));
  CHECK(x(1) == 0.0);
  const auto y = rk4_step(m, vec({0.5, 0.5}), vec({2, -1}), 0.01);
  CHECK((y - vec({0.52, 0.49})).norm() <= 1e-15);
}

TEST_CASE("unicycle coasting and rest", "[dynamics]") {
  const auto m = unicycle();
  CHECK((rk4_step(m, vec({0, 0, 0, 1}), vec({0, 0}), 0.01) - vec({0.01, 0, 0, 1})).norm() <= 1e-12);
  const auto rest = vec({1, -2, 0.3, 0});
  CHECK(rk4_step(m, rest, vec({0, 0}), 0.01) == rest);
}

TEST_CASE("unicycle returns to the start after a full circle", "[dynamics]") {
  const auto m = unicycle();
  Eigen::VectorXd x = vec({0, 0, 0, 1});
  const double dt = 0.01;
  const auto steps = static_cast<int>(std::lround(2.0 * std::numbers::pi / dt));
  for (int k = 0; k < steps; ++k) x = rk4_step(m, x, vec({1, 0}), dt);
  // finish the fractional period so the horizon is exactly 2 pi
  x = rk4_step(m, x, vec({1, 0}), 2.0 * std::numbers::pi - steps * dt);
  CHECK(x.head<2>().norm() <= 1e-6);
  CHECK_THAT(x(3), WithinAbs(1.0, 1e-15));
}

TEST_CASE("RK4 converges at fourth order", "[dynamics][property]") {
  double prev = circle_error(0.2);
  for (double dt : {0.1, 0.05, 0.025}) {
    const double err = circle_error(dt);
    CHECK(prev / err >= std::pow(2.0, 3.5));
    prev = err;
  }
}

TEST_CASE("integration errors", "[dynamics]") {
  const auto m = unicycle();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(rk4_step(m, vec({0, 0, 0, nan}), vec({0, 0}), 0.01), NonFiniteState);
  CHECK_THROWS_AS(rk4_step(m, vec({0, 0, 0, 1}), vec({std::numeric_limits<double>::infinity(), 0}), 0.01),
                  NonFiniteState);
  CHECK_THROWS_AS(rk4_step(m, vec({0, 0, 0, 1}), vec({0, 0}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rk4_step(m, vec({0, 0, 0, 1}), vec({0, 0}), 0.01, 0), std::invalid_argument);
}
