#include "evolflow/instances.hpp"
#include "evolflow/manifold_paths.hpp"

#include <doctest.h>

#include <numbers>

using namespace evolflow;

namespace {

VectorX<double> v1(double a) { return VectorX<double>::Constant(1, a); }
VectorX<double> v2(double a, double b) {
  VectorX<double> v(2);
  v << a, b;
  return v;
}

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

AcPath<double> random_segment(Rng& rng, const VectorX<double>& start, double a, double b, Index cells, double scale) {
  std::vector<double> k{a};
  for (Index i = 1; i < cells; ++i) k.push_back(a + (b - a) * (static_cast<double>(i) + uni(rng, -0.3, 0.3)) / static_cast<double>(cells));
  k.push_back(b);
  MatrixX<double> d(start.size(), cells);
  for (Index c = 0; c < cells; ++c) {
    for (Index r = 0; r < start.size(); ++r) d(r, c) = uni(rng, -scale, scale);
  }
  return AcPath<double>(start, LpSample<double>(TimeGrid<double>(k), d, 1.0));
}

ManifoldAcPath random_torus_path(Rng& rng) {
  const std::vector<double> part{0.0, 0.3, 0.65, 1.0};
  std::vector<ChartSegment> segs;
  VectorX<double> start = v2(uni(rng, 0, 1), uni(rng, 0, 1));
  for (std::size_t i = 0; i + 1 < part.size(); ++i) {
    auto s = random_segment(rng, start, part[i], part[i + 1], 3, 2.0);
    start = s(s.b());
    segs.push_back({0, std::move(s)});
  }
  return ManifoldAcPath(LocalAddition::torus(2), part, std::move(segs));
}

double tuple_gap(const SectionTuple& a, const SectionTuple& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.tau.size(); ++i) {
    const auto g = common_refinement(a.tau[i].grid(), b.tau[i].grid());
    for (double t : g.knots()) m = std::max(m, (a.tau[i](t) - b.tau[i](t)).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

TEST_CASE("local additions") {
  Rng rng(1);
  const auto torus = LocalAddition::torus(2);
  const auto circle = LocalAddition::circle();
  for (int i = 0; i < 50; ++i) {
    const auto p = v2(uni(rng, 0, 1), uni(rng, 0, 1));
    CHECK(torus.sigma(p, v2(0, 0)) == torus.normalize(p));
    const auto v = v2(uni(rng, -0.49, 0.49), uni(rng, -0.49, 0.49));
    const auto [base, q] = torus.theta(p, v);
    CHECK((torus.theta_inv(base, q) - v).norm() < 1e-14);
    const auto th = v1(uni(rng, -3, 3));
    const auto w = v1(uni(rng, -3.1, 3.1));
    CHECK(circle.distance(circle.sigma(th, v1(0)), th) == 0.0);
    CHECK(std::abs(circle.theta_inv(th, circle.sigma(th, w))[0] - w[0]) < 1e-12);
  }
  CHECK_THROWS_AS(torus.sigma(v2(0, 0), v2(0.5, 0)), std::domain_error);
  CHECK(wrap_half(0.75) == -0.25);
  CHECK(wrap_half(-0.75) == 0.25);
  CHECK(wrap_unit(-0.25) == 0.75);
  CHECK(wrap_unit(3.0) == 0.0);
}

TEST_CASE("stereographic charts") {
  const auto circle = LocalAddition::circle();
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto p = v1(uni(rng, -1.4, 1.4) - 0.5 * std::numbers::pi);
    for (int c = 0; c < 2; ++c) {
      if (c == 1 && std::abs(std::sin(p[0]) + 1.0) < 1e-3) continue;
      const auto u = circle.to_chart(c, p);
      CHECK(circle.distance(circle.from_chart(c, u), p) < 1e-14);
      const double e = 1e-6;
      const double fd = (circle.to_chart(c, p + v1(e))[0] - circle.to_chart(c, p - v1(e))[0]) / (2 * e);
      CHECK(fd == doctest::Approx(circle.chart_derivative(c, p)(0, 0)).epsilon(1e-7));
    }
  }
  // North and south coordinates are reciprocal: w at u = 2 becomes -w/4.
  for (double w : {1.0, -0.3, 2.5}) CHECK(std::abs(tangent_transition(circle, 0, 1, v1(2.0), v1(w))[0] + w / 4.0) <= 1e-12);
  CHECK(circle.to_chart(1, circle.from_chart(0, v1(2.0)))[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(circle.to_chart(0, v1(0.5 * std::numbers::pi)), std::domain_error);
}

TEST_CASE("paths, constants and point evaluation") {
  const auto torus = LocalAddition::torus(2);
  const auto q = v2(0.2, 0.9);
  const auto c = const_path(torus, q);
  CHECK(point_eval(c, 0.37) == q);
  const auto circle = LocalAddition::circle();
  const auto cc = const_path(circle, v1(1.0));
  CHECK(circle.distance(point_eval(cc, 0.37), v1(1.0)) < 1e-15);

  const auto v = v2(1.5, -0.7);
  const AcPath<double> lin(v2(0.1, 0.2), LpSample<double>::constant_value(TimeGrid<double>::uniform(0, 1, 1), v, 1.0));
  const ManifoldAcPath eta(torus, {0.0, 1.0}, {{0, lin}});
  for (double t : {0.0, 0.4, 1.0}) {
    const auto expect = torus.normalize(v2(0.1, 0.2) + t * v);
    CHECK(torus.distance(point_eval(eta, t), expect) < 1e-15);
  }
  CHECK_THROWS_AS(ManifoldAcPath(torus, {0.0, 0.5, 1.0},
                                 {{0, AcPath<double>::constant(v2(0, 0), TimeGrid<double>::uniform(0, 0.5, 1), 1.0)},
                                  {0, AcPath<double>::constant(v2(0.1, 0), TimeGrid<double>::uniform(0.5, 1, 1), 1.0)}}),
                  std::invalid_argument);
  // Segments may jump by a lattice vector in the lift: same point on the torus.
  CHECK_NOTHROW(ManifoldAcPath(torus, {0.0, 0.5, 1.0},
                               {{0, AcPath<double>::constant(v2(0, 0), TimeGrid<double>::uniform(0, 0.5, 1), 1.0)},
                                {0, AcPath<double>::constant(v2(1, -1), TimeGrid<double>::uniform(0.5, 1, 1), 1.0)}}));
}

TEST_CASE("charts of the path manifold on the torus") {
  const auto torus = LocalAddition::torus(2);
  Rng rng(3);
  const auto p = v2(0.3, 0.8);
  const auto eta = const_path(torus, p);
  const auto zero = zero_section(eta);
  CHECK(manifold_path_distance(chart_psi(eta, zero), eta) == 0.0);

  SectionTuple shift;
  shift.charts = {0};
  shift.tau = {AcPath<double>::constant(v2(0.4, 0.3), eta.segments()[0].path.grid(), 1.0)};
  const auto moved = chart_psi(eta, shift);
  CHECK(torus.distance(point_eval(moved, 0.5), torus.normalize(p + v2(0.4, 0.3))) < 1e-15);

  for (int i = 0; i < 10; ++i) {
    const auto path = random_torus_path(rng);
    CHECK(manifold_path_distance(chart_psi(path, zero_section(path)), path) <= 1e-15);
    const auto sigma = random_segment(rng, v2(uni(rng, -0.2, 0.2), uni(rng, -0.2, 0.2)), 0.0, 1.0, 5, 0.2);
    const auto tau = section_embed(path, sigma);
    CHECK(tuple_gap(chart_psi_inv(path, chart_psi(path, tau)), tau) <= 1e-12);
    CHECK(section_compatibility_defect(path, tau) == 0.0);
    const auto glued = section_glue(path, tau);
    for (double t : {0.0, 0.2, 0.3, 0.5, 0.9, 1.0}) CHECK((glued(t) - sigma(t)).norm() < 1e-15);

    CHECK(tuple_gap(transition(path, path, tau), tau) <= 1e-12);
    std::vector<ChartSegment> segs;
    const auto c = v2(uni(rng, -0.1, 0.1), uni(rng, -0.1, 0.1));
    for (const auto& s : path.segments()) segs.push_back({0, AcPath<double>(s.path.start() + c, s.path.density())});
    const ManifoldAcPath xi(torus, path.partition(), std::move(segs));
    CHECK(tuple_gap(transition(path, xi, transition(xi, path, tau)), tau) <= 1e-11);
  }
}

TEST_CASE("transition between constant torus paths") {
  const auto torus = LocalAddition::torus(2);
  const auto p = v2(0.9, 0.1);
  const auto q = v2(0.05, 0.95);
  const auto lp = const_path(torus, p);
  const auto lq = const_path(torus, q);
  // Lambda_{q,p}(0) = theta^{-1}(q, p) = p - q wrapped.
  const auto s = transition(lq, lp, zero_section(lp));
  CHECK((s.tau[0](0.5) - v2(wrap_half(p[0] - q[0]), wrap_half(p[1] - q[1]))).norm() < 1e-15);
  CHECK(s.tau[0].density().values().norm() == 0.0);
}

TEST_CASE("circle sections across charts") {
  const auto circle = LocalAddition::circle();
  const auto u2 = AcPath<double>::constant(v1(2.0), TimeGrid<double>::uniform(0, 1, 1), 1.0);
  const ManifoldAcPath eta(circle, {0.0, 1.0}, {{0, u2}});
  const double w = 0.8;
  // w in north coordinates is the angle rate w / (du/dtheta) with du/dtheta = 5/2 at u = 2.
  const auto sigma = AcPath<double>::constant(v1(w / 2.5), TimeGrid<double>::uniform(0, 1, 1), 1.0);
  const auto north = section_embed(eta, sigma, {0});
  const auto south = section_embed(eta, sigma, {1});
  CHECK(std::abs(north.tau[0](0.5)[0] - w) <= 1e-12);
  CHECK(std::abs(south.tau[0](0.5)[0] + w / 4.0) <= 1e-12);

  // A path through both charts and a section glued back together.
  Rng rng(4);
  const double th0 = -0.5 * std::numbers::pi - 0.4;
  const auto seg1 = AcPath<double>(circle.to_chart(0, v1(th0)),
                                   LpSample<double>::constant_value(TimeGrid<double>::uniform(0, 0.5, 2), v1(0.3), 1.0));
  const double th_mid = circle.from_chart(0, seg1(0.5))[0];
  const auto seg2 = AcPath<double>(circle.to_chart(1, v1(th_mid)),
                                   LpSample<double>::constant_value(TimeGrid<double>::uniform(0.5, 1, 2), v1(-0.2), 1.0));
  const ManifoldAcPath path(circle, {0.0, 0.5, 1.0}, {{0, seg1}, {1, seg2}});
  const auto sec = random_segment(rng, v1(0.1), 0.0, 1.0, 4, 0.3);
  const auto tau = section_embed(path, sec);
  CHECK(section_compatibility_defect(path, tau) <= 1e-12);
  const auto glued = section_glue(path, tau);
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) CHECK(std::abs(glued(t)[0] - sec(t)[0]) < 1e-13);
  CHECK(tuple_gap(chart_psi_inv(path, chart_psi(path, tau)), tau) <= 1e-12);
  CHECK(manifold_path_distance(chart_psi(path, zero_section(path)), path) <= 1e-15);

  SectionTuple broken = tau;
  broken.tau[1] = AcPath<double>(tau.tau[1].start() + v1(0.1), tau.tau[1].density());
  CHECK_THROWS_AS(section_glue(path, broken), std::invalid_argument);
}

TEST_CASE("products of tori") {
  Rng rng(5);
  const auto path = random_torus_path(rng);
  const auto [a, b] = split_product(path, 1);
  CHECK(a.manifold().dim() == 1);
  const auto back = combine_product(a, b);
  CHECK(manifold_path_distance(back, path) == 0.0);
}

TEST_CASE("evolution on the torus") {
  const auto g = torus_geometry(16);
  const auto zero = PeriodicVelocity2d::zero(TimeGrid<double>::uniform(0, 1, 1), g, 1.0);
  CHECK(evolve_torus(zero).path.back().is_zero());

  const Eigen::Vector2d v(0.3, -0.45);
  const auto shift = evolve_torus(steady_velocity(constant_periodic_field(g, v)));
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector2d x(uni(rng, 0, 1), uni(rng, 0, 1));
    for (double t : {0.5, 1.0}) {
      const Eigen::Vector2d y = torus_flow_point(shift, t, x);
      for (int d = 0; d < 2; ++d) CHECK(std::abs(wrap_half(y[d] - (x[d] + t * v[d]))) < 1e-13);
    }
  }

  const auto gamma = random_periodic_velocity(torus_geometry(32), rng, 2, 0.8);
  const auto r = evolve_torus(gamma);
  CHECK(r.residual <= r.tolerance);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d x(uni(rng, 0, 1), uni(rng, 0, 1));
    const Eigen::Vector2d y = torus_flow_point(r, 1.0, x);
    const Eigen::Vector2d z = rk4_oracle(gamma, x, 4096).path(1.0);
    CHECK(std::hypot(wrap_half(y[0] - z[0]), wrap_half(y[1] - z[1])) < 1e-4);
  }
  CHECK_THROWS_AS(evolve_torus(steady_velocity(PeriodicField2d::zero(
                      make_geometry<double, 2, Boundary::periodic>(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 2), 0.125)))),
                  std::invalid_argument);
}
