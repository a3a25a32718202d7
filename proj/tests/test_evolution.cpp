#include "evolflow/instances.hpp"

#include <doctest.h>

#include <numbers>

using namespace evolflow;

namespace {

Eigen::Vector2d rotate(double a, const Eigen::Vector2d& x) {
  return Eigen::Vector2d(std::cos(a) * x[0] - std::sin(a) * x[1], std::sin(a) * x[0] + std::cos(a) * x[1]);
}

// Rotation with omega = 0.3, exact on |x| <= 0.8 - 2h.
Velocity2d rotation() { return steady_velocity(plateau_rotation(square_geometry(2.0, 32), 0.3, 0.8, 1.8)); }

}  // namespace

TEST_CASE("velocity construction and algebra") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(1);
  const auto gamma = random_velocity(g, rng, 3, 0.7, 2.0);
  CHECK(contraction_bound(gamma).l1 == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(contraction_bound(gamma).l1 <= contraction_bound(gamma).lp + 1e-15);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 2), g, 1.0);
  CHECK(zero.is_zero());
  CHECK(contraction_bound(zero).l1 == 0.0);
  const auto f = random_field(g, rng, 0.4);
  CHECK(contraction_bound(steady_velocity(f)).l1 == doctest::Approx(0.4).epsilon(1e-12));

  const auto sum = gamma + zero;
  CHECK(sum.grid() == common_refinement(gamma.grid(), zero.grid()));
  CHECK(contraction_bound(sum).l1 == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(contraction_bound(2.0 * gamma).l1 == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("subdivision budgets add up to the total") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(2);
  const auto gamma = random_velocity(g, rng, 4, 1.3);
  for (Index n : {1, 2, 3, 4, 8}) {
    const auto b = subdivision_budgets(gamma, n);
    double sum = 0;
    for (double v : b) sum += v;
    CHECK(sum == doctest::Approx(1.3).epsilon(1e-12));
  }
  const auto cg = constant_alpha_velocity(g, rng, 5, 0.9);
  for (Index n : {1, 2, 4, 8, 16}) {
    const auto b = subdivision_budgets(cg, n);
    CHECK(*std::max_element(b.begin(), b.end()) == doctest::Approx(0.9 / static_cast<double>(n)).epsilon(1e-12));
  }
  const auto sub = subdivide(gamma, 4, 2);
  CHECK((sub.at(0.5).coefficients() - 0.25 * gamma.at(0.625).coefficients()).norm() == 0.0);
}

TEST_CASE("concatenation reparametrizes both halves") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(3);
  const auto g1 = random_velocity(g, rng, 2, 0.4);
  const auto g2 = random_velocity(g, rng, 3, 0.3);
  const auto c = concatenate(g1, g2);
  CHECK(contraction_bound(c).l1 == doctest::Approx(0.7).epsilon(1e-12));
  CHECK((c.at(0.2).coefficients() - 2.0 * g1.at(0.4).coefficients()).norm() == 0.0);
  CHECK((c.at(0.9).coefficients() - 2.0 * g2.at(0.8).coefficients()).norm() == 0.0);
}

TEST_CASE("applying a velocity along traces") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(4);
  const auto grid = TimeGrid<double>::uniform(0, 1, 4);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  const auto trace = ContinuousTrace<double>::constant(grid, Eigen::Vector2d(0.1, 0.2));
  CHECK(apply_along(zero, trace).values().norm() == 0.0);
  const auto f = random_field(g, rng, 0.5);
  const auto s = apply_along(steady_velocity(f), trace);
  for (Index c = 0; c < s.grid().cells(); ++c) CHECK((s.values().col(c) - f(Eigen::Vector2d(0.1, 0.2))).norm() == 0.0);

  // Along the exact circular arc the rotation field gives the tangent omega J zeta.
  const auto rot = rotation();
  const auto fine = TimeGrid<double>::uniform(0, 1, 64);
  MatrixX<double> arc(2, fine.size());
  const Eigen::Vector2d x(0.3, 0.1);
  for (Index i = 0; i < fine.size(); ++i) arc.col(i) = rotate(0.3 * fine.knot(i), x);
  const auto tangent = apply_along(rot, ContinuousTrace<double>(fine, arc));
  for (Index c = 0; c < fine.cells(); ++c) {
    const Eigen::Vector2d z = 0.5 * (arc.col(c) + arc.col(c + 1));
    CHECK((tangent.values().col(c) - 0.3 * Eigen::Vector2d(-z[1], z[0])).norm() < 1e-13);
  }
}

TEST_CASE("Picard iteration for one point") {
  const auto g = square_geometry(1.0, 16);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  const auto z = picard_point(zero, Eigen::Vector2d(0.2, 0.3));
  CHECK(z.iterations == 1);
  CHECK((z.path(1.0) - Eigen::Vector2d(0.2, 0.3)).norm() == 0.0);

  Rng rng(5);
  const auto gamma = random_velocity(g, rng, 2, 0.6);
  const Eigen::Vector2d far(1.5, -0.2);
  const auto fixed = picard_point(gamma, far);
  CHECK(fixed.path(0.5) == far);
  CHECK(fixed.path(1.0) == far);
  CHECK_THROWS_AS(picard_point(random_velocity(g, rng, 1, 1.2), far), std::domain_error);

  const auto rot = rotation();
  const Eigen::Vector2d x(0.25, -0.15);
  const auto r = picard_point(rot, x);
  CHECK((r.path(1.0) - rotate(0.3, x)).norm() < 1e-6);
  CHECK(r.residual < 1e-9);
}

TEST_CASE("local evolution") {
  const auto g = square_geometry(2.0, 32);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  const auto rz = local_evolve(zero);
  CHECK(rz.path.back().is_zero());
  CHECK(rz.residual == 0.0);

  const Eigen::Vector2d v(0.1, -0.05);
  const auto trans = steady_velocity(plateau_translation(g, v, 0.8, 1.8));
  const auto rt = local_evolve(trans);
  for (double t : {0.25, 0.5, 1.0}) {
    for (const Eigen::Vector2d x : {Eigen::Vector2d(0, 0), Eigen::Vector2d(0.3, 0.2), Eigen::Vector2d(-0.4, 0.1)}) {
      CHECK((rt.path.displacement(t, x) - t * v).norm() <= rt.tolerance);
    }
  }
  CHECK(rt.residual <= rt.tolerance);

  Rng rng(6);
  const auto g1 = square_geometry(1.0, 32);
  const auto gamma = random_velocity(g1, rng, 2, 0.3);
  const auto r = local_evolve(gamma);
  CHECK(r.residual <= r.tolerance);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d x = random_point(*g1, rng, 0.9);
    CHECK((flow_point(r, 1.0, x) - rk4_oracle(gamma, x, 4096).path(1.0)).norm() < 1e-4);
  }
  CHECK_THROWS_AS(local_evolve(random_velocity(g1, rng, 1, 0.7)), std::domain_error);
}

TEST_CASE("evolution with subdivision") {
  const auto g = square_geometry(1.0, 32);
  Rng rng(7);
  const auto small = random_velocity(g, rng, 2, 0.3);
  const auto a = evolve(small);
  const auto b = local_evolve(small);
  CHECK(a.n == 1);
  CHECK(group_path_distance(a.path, b.path) == 0.0);

  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 3), g, 1.0);
  SolverOptions forced;
  forced.forced_segments = 4;
  const auto z = evolve(zero, forced);
  CHECK(z.n == 4);
  CHECK(z.path.back().is_zero());

  const auto gamma = random_velocity(g, rng, 3, 1.1);
  const auto r = evolve(gamma);
  CHECK(r.n == 4);
  CHECK(r.residual <= r.tolerance);
  CHECK(r.segments.size() == 4);
  SolverOptions twice;
  twice.forced_segments = 2 * r.n;
  const auto r2 = evolve(gamma, twice);
  CHECK(group_path_distance(r.path, r2.path) <= 10 * (r.tolerance + r2.tolerance));

  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector2d x = random_point(*g, rng, 0.9);
    CHECK(flow_point(r, 0.0, x) == x);
    CHECK((flow_point(r, 1.0, x) - rk4_oracle(gamma, x, 4096).path(1.0)).norm() < 1e-4);
    CHECK(flow_point(r, 0.6, Eigen::Vector2d(1.2, x[1])) == Eigen::Vector2d(1.2, x[1]));
  }
  // Picard for one point and the field-valued route agree when the budget allows it.
  const auto x = random_point(*g, rng, 0.5);
  CHECK((picard_point(small, x).path(1.0) - flow_point(a, 1.0, x)).norm() < 1e-5);
}

TEST_CASE("residual of trial paths") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(8);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  const auto neutral = GroupPath<CompactField2d>::neutral(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  CHECK(residual(zero, neutral) == 0.0);
  const auto f = random_field(g, rng, 0.5);
  const double r = residual(steady_velocity(f), neutral);
  // Plugging in the neutral path leaves |int_0^1 F(x) ds| = |F(x)| on the lattice.
  CHECK(r == doctest::Approx(vf_sup_norm(f, 2)).epsilon(1e-14));
  CHECK(r > 0);
}

TEST_CASE("RK4 oracle") {
  const auto g = square_geometry(1.0, 16);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  CHECK(rk4_oracle(zero, Eigen::Vector2d(0.1, 0.1), 10).path(1.0) == Eigen::Vector2d(0.1, 0.1));

  const auto rot = rotation();
  const Eigen::Vector2d x(0.3, 0.2);
  CHECK((rk4_oracle(rot, x, 10000).path(1.0) - rotate(0.3, x)).norm() < 1e-8);
  const double e1 = (rk4_oracle(rot, x, 4).path(1.0) - rotate(0.3, x)).norm();
  const double e2 = (rk4_oracle(rot, x, 8).path(1.0) - rotate(0.3, x)).norm();
  CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.1));
}

TEST_CASE("continuity probe") {
  const auto g = square_geometry(1.0, 16);
  Rng rng(9);
  const auto gamma = random_velocity(g, rng, 2, 0.6);
  const auto zero = Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  for (const auto& row : continuity_probe(gamma, zero, 3)) CHECK(row.distance == 0.0);
  const auto delta = random_velocity(g, rng, 3, 0.05);
  const auto rows = continuity_probe(gamma, delta, 4);
  REQUIRE(rows.size() == 4);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(rows[k].scale == 0.5 * rows[k - 1].scale);
    CHECK(rows[k].distance <= 1.1 * rows[k - 1].distance);
  }
  CHECK(rows.back().distance < rows.front().distance);
}
