#include "evolflow/instances.hpp"

#include <cmath>
#include <numbers>

namespace evolflow {

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::vector<double> random_knots(Rng& rng, Index cells) {
  std::vector<double> k{0.0};
  if (cells > 1) {
    // Perturbed uniform knots keep every cell reasonably wide.
    for (Index i = 1; i < cells; ++i) k.push_back((static_cast<double>(i) + uniform(rng, -0.3, 0.3)) / static_cast<double>(cells));
  }
  k.push_back(1.0);
  return k;
}

template <typename Field>
Field scaled_to_alpha(const Field& f, double alpha) {
  const double a = vf_alpha(f);
  if (!(a > 0)) throw std::runtime_error("random instance has zero alpha");
  return (alpha / a) * f;
}

template <typename Field, typename Make>
TimeVelocity<Field> scaled_velocity(Rng& rng, Index cells, double l1, double p, Make&& make) {
  const auto knots = random_knots(rng, cells);
  std::vector<Field> fields;
  for (Index c = 0; c < cells; ++c) fields.push_back(make(uniform(rng, 0.5, 1.5)));
  const TimeVelocity<Field> raw(TimeGrid<double>(knots), std::move(fields), p);
  return (l1 / contraction_bound(raw).l1) * raw;
}

}  // namespace

std::shared_ptr<const Geometry2d> square_geometry(double half_width, Index cells) {
  return make_geometry<double, 2, Boundary::compact>(Eigen::Vector2d::Constant(-half_width),
                                                     Eigen::Vector2d::Constant(half_width),
                                                     2.0 * half_width / static_cast<double>(cells));
}

std::shared_ptr<const PeriodicGeometry2d> torus_geometry(Index cells) {
  return make_geometry<double, 2, Boundary::periodic>(Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(),
                                                      1.0 / static_cast<double>(cells));
}

double plateau_cutoff(double r, double r0, double r1) {
  if (r <= r0) return 1.0;
  if (r >= r1) return 0.0;
  const double s = (r - r0) / (r1 - r0);
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

CompactField2d random_field(const std::shared_ptr<const Geometry2d>& g, Rng& rng, double alpha) {
  const double half = 0.5 * (g->hi()[0] - g->lo()[0]);
  const Eigen::Vector2d centre = 0.5 * (g->lo() + g->hi());
  const int bumps = 3;
  std::vector<Eigen::Vector2d> centres, amplitudes;
  std::vector<double> widths;
  for (int b = 0; b < bumps; ++b) {
    centres.push_back(centre + half * Eigen::Vector2d(uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4)));
    amplitudes.push_back(Eigen::Vector2d(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)));
    widths.push_back(half * uniform(rng, 0.2, 0.35));
  }
  const auto raw = CompactField2d::from_function(g, [&](const Eigen::Vector2d& x) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (int b = 0; b < bumps; ++b) {
      const double r2 = (x - centres[b]).squaredNorm() / (widths[b] * widths[b]);
      v += amplitudes[b] * std::exp(-0.5 * r2);
    }
    return Eigen::Vector2d(v * plateau_cutoff((x - centre).lpNorm<Eigen::Infinity>() / half, 0.6, 0.9));
  });
  return scaled_to_alpha(raw, alpha);
}

PeriodicField2d random_periodic_field(const std::shared_ptr<const PeriodicGeometry2d>& g, Rng& rng, double alpha) {
  struct Mode {
    int kx, ky;
    Eigen::Vector2d a, b;
  };
  std::vector<Mode> modes;
  for (int kx = -1; kx <= 1; ++kx) {
    for (int ky = -1; ky <= 1; ++ky) {
      modes.push_back({kx, ky, Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1)),
                       Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1))});
    }
  }
  const auto raw = PeriodicField2d::from_function(g, [&](const Eigen::Vector2d& x) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (const auto& m : modes) {
      const double phase = 2.0 * std::numbers::pi * (m.kx * x[0] + m.ky * x[1]);
      v += m.a * std::cos(phase) + m.b * std::sin(phase);
    }
    return v;
  });
  return scaled_to_alpha(raw, alpha);
}

Velocity2d random_velocity(const std::shared_ptr<const Geometry2d>& g, Rng& rng, Index cells, double l1, double p) {
  return scaled_velocity<CompactField2d>(rng, cells, l1, p, [&](double a) { return random_field(g, rng, a); });
}

PeriodicVelocity2d random_periodic_velocity(const std::shared_ptr<const PeriodicGeometry2d>& g, Rng& rng, Index cells,
                                            double l1, double p) {
  return scaled_velocity<PeriodicField2d>(rng, cells, l1, p, [&](double a) { return random_periodic_field(g, rng, a); });
}

Velocity2d constant_alpha_velocity(const std::shared_ptr<const Geometry2d>& g, Rng& rng, Index cells, double alpha,
                                   double p) {
  const auto f = random_field(g, rng, alpha);
  const double a = vf_alpha(f);
  const auto minus = -1.0 * f;
  std::vector<CompactField2d> fields;
  for (Index c = 0; c < cells; ++c) fields.push_back(c % 2 == 0 ? f : minus);
  return Velocity2d(TimeGrid<double>(random_knots(rng, cells)), std::move(fields), p, std::vector<double>(cells, a));
}

CompactField2d plateau_rotation(const std::shared_ptr<const Geometry2d>& g, double omega, double r0, double r1) {
  CompactField2d::Coefficients c(2, g->active_count());
  for (Index j = 0; j < c.cols(); ++j) {
    const Eigen::Vector2d x = g->active_node(j);
    c.col(j) = omega * plateau_cutoff(x.norm(), r0, r1) * Eigen::Vector2d(-x[1], x[0]);
  }
  return CompactField2d(g, std::move(c));
}

CompactField2d plateau_translation(const std::shared_ptr<const Geometry2d>& g, const Eigen::Vector2d& v, double r0,
                                   double r1) {
  CompactField2d::Coefficients c(2, g->active_count());
  for (Index j = 0; j < c.cols(); ++j) c.col(j) = plateau_cutoff(g->active_node(j).norm(), r0, r1) * v;
  return CompactField2d(g, std::move(c));
}

PeriodicField2d constant_periodic_field(const std::shared_ptr<const PeriodicGeometry2d>& g, const Eigen::Vector2d& v) {
  // Uniform B-spline coefficients reproduce constants exactly.
  return PeriodicField2d(g, v.replicate(1, g->active_count()));
}

Eigen::Vector2d random_point(const Geometry2d& g, Rng& rng, double fraction) {
  const Eigen::Vector2d c = 0.5 * (g.lo() + g.hi());
  const Eigen::Vector2d half = 0.5 * (g.hi() - g.lo());
  return c + fraction * Eigen::Vector2d(uniform(rng, -half[0], half[0]), uniform(rng, -half[1], half[1]));
}

}  // namespace evolflow
