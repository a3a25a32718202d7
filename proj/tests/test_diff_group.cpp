#include "evolflow/diff_group.hpp"
#include "evolflow/instances.hpp"

#include <doctest.h>

using namespace evolflow;

namespace {

using Point1 = CompactField1d::Point;

std::shared_ptr<const CompactField1d::Geometry> line(double half, double h) {
  return make_geometry<double, 1, Boundary::compact>(Point1(-half), Point1(half), h);
}

// Coefficients a on the nodes with |x| <= r.
CompactField1d translation(const std::shared_ptr<const CompactField1d::Geometry>& g, double a, double r) {
  CompactField1d::Coefficients c(1, g->active_count());
  for (Index j = 0; j < c.cols(); ++j) c(0, j) = std::abs(g->active_node(j)[0]) <= r + 1e-12 ? a : 0.0;
  return CompactField1d(g, std::move(c));
}

CompactField1d smooth_translation(const std::shared_ptr<const CompactField1d::Geometry>& g, double a, double r0, double r1) {
  CompactField1d::Coefficients c(1, g->active_count());
  for (Index j = 0; j < c.cols(); ++j) c(0, j) = a * plateau_cutoff(std::abs(g->active_node(j)[0]), r0, r1);
  return CompactField1d(g, std::move(c));
}

}  // namespace

TEST_CASE("chart membership") {
  const auto g = square_geometry(1.0, 32);
  const auto zero = in_chart_check(CompactField2d::zero(g));
  CHECK(zero.ok);
  CHECK(zero.alpha == 0.0);
  CHECK(zero.min_det == 1.0);

  // Displacement -x on a plateau collapses the plateau to a point.
  CompactField2d::Coefficients c(2, g->active_count());
  for (Index j = 0; j < c.cols(); ++j) c.col(j) = -plateau_cutoff(g->active_node(j).norm(), 0.3, 0.8) * g->active_node(j);
  const CompactField2d collapse(g, c);
  const auto bad = in_chart_check(collapse);
  CHECK(bad.alpha >= 1.0);
  CHECK_FALSE(bad.ok);
  CHECK_THROWS_AS(GroupElement<CompactField2d>{collapse}, std::domain_error);

  Rng rng(1);
  const auto small = in_chart_check(random_field(g, rng, 0.2));
  CHECK(small.ok);
  CHECK(small.alpha == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("neutral element") {
  const auto g = square_geometry(1.0, 32);
  Rng rng(2);
  const GroupElement<CompactField2d> phi(random_field(g, rng, 0.5));
  const auto e = GroupElement<CompactField2d>::neutral(g);
  const double tol = resampling_tolerance(phi.displacement());
  CHECK(vf_sup_norm(star(phi, e).displacement() - phi.displacement()) <= tol);
  CHECK(vf_sup_norm(star(e, phi).displacement() - phi.displacement()) == 0.0);
  CHECK(star(e, e).displacement().is_zero());
}

TEST_CASE("plateau translations add") {
  const auto g = line(2.0, 1.0 / 32.0);
  const GroupElement<CompactField1d> a(smooth_translation(g, 0.1, 0.8, 1.7));
  const GroupElement<CompactField1d> b(smooth_translation(g, -0.25, 0.8, 1.7));
  const auto ab = star(a, b);
  for (double x = -0.3; x <= 0.3; x += 0.01) CHECK(ab.displacement()(Point1(x))[0] == doctest::Approx(-0.15).epsilon(1e-12));

  const auto inv = inverse(a);
  for (double x = -0.4; x <= 0.4; x += 0.01) CHECK(inv.displacement()(Point1(x))[0] == doctest::Approx(-0.1).epsilon(1e-10));
  CHECK(inverse(GroupElement<CompactField1d>::neutral(g)).displacement().is_zero());
}

TEST_CASE("inverse and associativity on random elements") {
  const auto g = square_geometry(1.0, 32);
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng rng(10 + s);
    const GroupElement<CompactField2d> phi(random_field(g, rng, 0.3));
    InverseDiagnostic diag;
    const auto inv = inverse(phi, {}, &diag);
    CHECK(diag.iterations > 0);
    CHECK(vf_sup_norm(star(phi, inv).displacement()) <= 1e-8);
    // The fixed point solves the right-inverse equation; the left product carries resampling error.
    CHECK(vf_sup_norm(star(inv, phi).displacement()) <= 10 * resampling_tolerance(phi.displacement()));

    const GroupElement<CompactField2d> psi(random_field(g, rng, 0.2));
    const GroupElement<CompactField2d> chi(random_field(g, rng, 0.2));
    const auto left = star(star(phi, psi), chi);
    const auto right = star(phi, star(psi, chi));
    const double tol = 10 * std::max(resampling_tolerance(left.displacement()), resampling_tolerance(right.displacement()));
    CHECK(vf_sup_norm(left.displacement() - right.displacement()) <= tol);
  }
}

TEST_CASE("group law matches composition of maps") {
  const auto g = square_geometry(1.0, 32);
  Rng rng(20);
  const GroupElement<CompactField2d> phi(random_field(g, rng, 0.3));
  const GroupElement<CompactField2d> psi(random_field(g, rng, 0.3));
  const auto prod = star(phi, psi);
  const double tol = resampling_tolerance(prod.displacement());
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d x = random_point(*g, rng, 1.0);
    CHECK((prod.apply(x) - phi.apply(psi.apply(x))).norm() <= tol);
  }
}

TEST_CASE("right translation derivative") {
  const auto g = square_geometry(1.0, 32);
  Rng rng(30);
  const auto f1 = random_field(g, rng, 0.5);
  const auto f2 = random_field(g, rng, 0.5);
  const auto zero = CompactField2d::zero(g);
  CHECK(vf_cr_seminorm(d_rho(zero, f1) - f1) <= resampling_tolerance(f1));

  const auto psi = random_field(g, rng, 0.3);
  const auto lhs = d_rho(psi, 2.0 * f1 - 0.5 * f2);
  const auto rhs = 2.0 * d_rho(psi, f1) - 0.5 * d_rho(psi, f2);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d x = random_point(*g, rng, 1.0);
    CHECK((lhs(x) - rhs(x)).norm() < 1e-14);
  }

  // Pointwise: the outer field evaluated along id + psi.
  const auto small = 0.05 / vf_sup_norm(psi) * psi;
  const auto moved = d_rho(small, f2);
  const double tol = resampling_tolerance(moved);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d x = random_point(*g, rng, 1.0);
    CHECK((moved(x) - f2(x + small(x))).norm() <= tol);
  }
}
