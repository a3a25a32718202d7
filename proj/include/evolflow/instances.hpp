#pragma once

// Velocity instances for experiments and tests: random smooth fields scaled to a
// prescribed alpha, and plateau fields that are exactly linear (rotation) or
// constant (translation) on a disc around the origin.

#include "evolflow/evolution.hpp"

#include <random>

namespace evolflow {

using Geometry2d = CompactField2d::Geometry;
using PeriodicGeometry2d = PeriodicField2d::Geometry;
using Velocity2d = TimeVelocity<CompactField2d>;
using PeriodicVelocity2d = TimeVelocity<PeriodicField2d>;
using Rng = std::mt19937_64;

/// Square box [-half_width, half_width]^2 split into `cells` cells per axis.
std::shared_ptr<const Geometry2d> square_geometry(double half_width, Index cells);
/// Unit torus grid [0,1)^2 with `cells` nodes per axis.
std::shared_ptr<const PeriodicGeometry2d> torus_geometry(Index cells);

/// C^2 step from 1 (r <= r0) to 0 (r >= r1).
double plateau_cutoff(double r, double r0, double r1);

/// Sum of a few Gaussian bumps with random vector amplitudes, damped towards the box
/// boundary and scaled so that vf_alpha equals `alpha`.
CompactField2d random_field(const std::shared_ptr<const Geometry2d>& g, Rng& rng, double alpha);
/// Trigonometric field on the torus scaled to vf_alpha = alpha.
PeriodicField2d random_periodic_field(const std::shared_ptr<const PeriodicGeometry2d>& g, Rng& rng, double alpha);

/// Random knots (uniform when `cells` is 1) and independent random fields, then a
/// common scale so that the contraction bound equals `l1`.
Velocity2d random_velocity(const std::shared_ptr<const Geometry2d>& g, Rng& rng, Index cells, double l1, double p = 1.0);
PeriodicVelocity2d random_periodic_velocity(const std::shared_ptr<const PeriodicGeometry2d>& g, Rng& rng, Index cells,
                                            double l1, double p = 1.0);

/// Random knots, every cell carrying +F or -F for one field F: alpha is constant in time.
Velocity2d constant_alpha_velocity(const std::shared_ptr<const Geometry2d>& g, Rng& rng, Index cells, double alpha,
                                   double p = 1.0);

/// Coefficients omega J x_j chi(|x_j|): exactly omega J x wherever every stencil node
/// sits on the plateau |x| <= r0.
CompactField2d plateau_rotation(const std::shared_ptr<const Geometry2d>& g, double omega, double r0, double r1);
/// Coefficients v chi(|x_j|): exactly v on the plateau.
CompactField2d plateau_translation(const std::shared_ptr<const Geometry2d>& g, const Eigen::Vector2d& v, double r0,
                                   double r1);
/// Spatially constant periodic field v.
PeriodicField2d constant_periodic_field(const std::shared_ptr<const PeriodicGeometry2d>& g, const Eigen::Vector2d& v);

/// Single-cell velocity carrying one field.
template <typename Field>
TimeVelocity<Field> steady_velocity(const Field& f, double p = 1.0) {
  return TimeVelocity<Field>(TimeGrid<double>::uniform(0.0, 1.0, 1), {f}, p);
}

/// Uniform point in the box scaled by `fraction` about its centre.
Eigen::Vector2d random_point(const Geometry2d& g, Rng& rng, double fraction = 1.0);

}  // namespace evolflow
