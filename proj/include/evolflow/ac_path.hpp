#pragma once

// Absolutely continuous paths eta(t) = eta(a) + int_a^t eta'(s) ds with an L^p
// density, stored as (start, density). The base point is always t_0 = a.

#include "evolflow/lp_space.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace evolflow {

/// Piecewise-linear continuous curve through knot values; the C([a,b],E) leg.
template <typename Scalar>
class ContinuousTrace {
 public:
  ContinuousTrace() = default;
  ContinuousTrace(TimeGrid<Scalar> grid, MatrixX<Scalar> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.cols() != grid_.size()) throw std::invalid_argument("ContinuousTrace: one value per knot required");
    if (!values_.allFinite()) throw std::invalid_argument("ContinuousTrace: non-finite values");
  }

  static ContinuousTrace constant(const TimeGrid<Scalar>& grid, const VectorX<Scalar>& x) {
    return ContinuousTrace(grid, x.replicate(1, grid.size()));
  }

  const TimeGrid<Scalar>& grid() const { return grid_; }
  const MatrixX<Scalar>& values() const { return values_; }
  Index dim() const { return values_.rows(); }

  VectorX<Scalar> operator()(Scalar t) const {
    const Index c = grid_.locate(t);
    const Scalar lam = (t - grid_.knot(c)) / grid_.width(c);
    return (Scalar(1) - lam) * values_.col(c) + lam * values_.col(c + 1);
  }

 private:
  TimeGrid<Scalar> grid_;
  MatrixX<Scalar> values_;
};

/// sup_t |z1(t) - z2(t)| (Euclidean); piecewise-linear, so the max sits on a knot of the common refinement.
template <typename Scalar>
Scalar sup_distance(const ContinuousTrace<Scalar>& z1, const ContinuousTrace<Scalar>& z2) {
  const auto grid = common_refinement(z1.grid(), z2.grid());
  Scalar m = 0;
  for (Index i = 0; i < grid.size(); ++i) {
    m = std::max(m, (z1(grid.knot(i)) - z2(grid.knot(i))).norm());
  }
  return m;
}

template <typename Scalar>
class AcPath {
 public:
  AcPath() = default;
  AcPath(VectorX<Scalar> start, LpSample<Scalar> density) : start_(std::move(start)), density_(std::move(density)) {
    if (start_.size() != density_.dim()) throw std::invalid_argument("AcPath: start and density dimensions differ");
    if (!start_.allFinite()) throw std::invalid_argument("AcPath: non-finite start");
  }

  static AcPath constant(const VectorX<Scalar>& x, const TimeGrid<Scalar>& grid, Scalar p) {
    return AcPath(x, LpSample<Scalar>::zero(grid, x.size(), p));
  }

  const VectorX<Scalar>& start() const { return start_; }
  const LpSample<Scalar>& density() const { return density_; }
  const TimeGrid<Scalar>& grid() const { return density_.grid(); }
  Scalar a() const { return density_.a(); }
  Scalar b() const { return density_.b(); }
  Scalar p() const { return density_.p(); }
  Index dim() const { return start_.size(); }

  VectorX<Scalar> operator()(Scalar t) const;

  /// Values at every knot of the density grid, accumulated cell by cell.
  MatrixX<Scalar> knot_values() const {
    const auto& g = grid();
    MatrixX<Scalar> out(dim(), g.size());
    out.col(0) = start_;
    for (Index c = 0; c < g.cells(); ++c) {
      if (density_.mode() == Interpolation::constant) {
        out.col(c + 1) = out.col(c) + g.width(c) * density_.values().col(c);
      } else {
        out.col(c + 1) = out.col(c) + Scalar(0.5) * g.width(c) * (density_.values().col(c) + density_.values().col(c + 1));
      }
    }
    return out;
  }

  friend AcPath operator+(const AcPath& x, const AcPath& y) { return AcPath(x.start_ + y.start_, x.density_ + y.density_); }
  friend AcPath operator-(const AcPath& x, const AcPath& y) { return AcPath(x.start_ - y.start_, x.density_ - y.density_); }
  friend AcPath operator*(Scalar lambda, const AcPath& x) { return AcPath(lambda * x.start_, lambda * x.density_); }

 private:
  VectorX<Scalar> start_;
  LpSample<Scalar> density_;
};

template <typename Scalar>
VectorX<Scalar> ac_eval(const AcPath<Scalar>& eta, Scalar t) {
  if (!eta.grid().contains(t)) throw std::out_of_range("ac_eval: t outside [a,b]");
  if (t == eta.a()) return eta.start();
  return eta.start() + weak_integral(eta.density(), eta.a(), t);
}

template <typename Scalar>
VectorX<Scalar> AcPath<Scalar>::operator()(Scalar t) const {
  return ac_eval(*this, t);
}

/// eta -> (eta(a), eta').
template <typename Scalar>
std::pair<VectorX<Scalar>, LpSample<Scalar>> ac_phi(const AcPath<Scalar>& eta) {
  return {eta.start(), eta.density()};
}

template <typename Scalar>
AcPath<Scalar> ac_phi_inv(const VectorX<Scalar>& start, const LpSample<Scalar>& density) {
  return AcPath<Scalar>(start, density);
}

/// Psi: eta -> (trace at the sample knots, density).
template <typename Scalar>
std::pair<ContinuousTrace<Scalar>, LpSample<Scalar>> ac_embed(const AcPath<Scalar>& eta,
                                                              const TimeGrid<Scalar>& sample_knots) {
  if (!sample_knots.refines(eta.grid())) throw std::invalid_argument("ac_embed: sample knots must refine the density grid");
  const auto refined = eta.density().refined(sample_knots);
  const AcPath<Scalar> on_knots(eta.start(), refined);
  return {ContinuousTrace<Scalar>(sample_knots, on_knots.knot_values()), eta.density()};
}

/// Closed-image check: largest gap between the trace and the primitive of the
/// density started at trace(a). Zero for every output of ac_embed.
template <typename Scalar>
Scalar reintegration_defect(const ContinuousTrace<Scalar>& trace, const LpSample<Scalar>& density) {
  const auto& g = trace.grid();
  if (!g.refines(density.grid())) throw std::invalid_argument("reintegration_defect: trace grid must refine density grid");
  const AcPath<Scalar> primitive(trace.values().col(0), density.refined(g));
  return (primitive.knot_values() - trace.values()).template lpNorm<Eigen::Infinity>();
}

/// eta o g with g(t) = a + (t - c)/(d - c) (b - a); path now lives on [c,d].
template <typename Scalar>
AcPath<Scalar> ac_reparam(const AcPath<Scalar>& eta, Scalar c, Scalar d) {
  if (!(c < d)) throw std::invalid_argument("ac_reparam: need c < d");
  const auto& f = eta.density();
  const Scalar factor = (eta.b() - eta.a()) / (d - c);
  auto grid = f.grid().mapped(c, d);
  return AcPath<Scalar>(eta.start(), LpSample<Scalar>(std::move(grid), factor * f.values(), f.p(), f.mode()));
}

/// Map with first derivative, defined on an open set U.
template <typename Scalar>
struct SmoothMap {
  std::function<VectorX<Scalar>(const VectorX<Scalar>&)> value;
  std::function<MatrixX<Scalar>(const VectorX<Scalar>&)> jacobian;
  std::function<bool(const VectorX<Scalar>&)> in_domain = [](const VectorX<Scalar>&) { return true; };

  static SmoothMap linear(const MatrixX<Scalar>& a) {
    return {[a](const VectorX<Scalar>& x) -> VectorX<Scalar> { return a * x; },
            [a](const VectorX<Scalar>&) -> MatrixX<Scalar> { return a; }};
  }
};

/// f o eta with density df(eta(t_mid)) eta'_cell on eta's grid split into
/// `subcells` pieces per cell. Linear f is reproduced exactly.
template <typename Scalar>
AcPath<Scalar> ac_superpose(const SmoothMap<Scalar>& f, const AcPath<Scalar>& eta, Index subcells = 1) {
  if (eta.density().mode() != Interpolation::constant) {
    throw std::invalid_argument("ac_superpose: expects a step density");
  }
  const auto grid = eta.grid().refined(subcells);
  const auto dens = eta.density().refined(grid);
  const AcPath<Scalar> fine(eta.start(), dens);
  const MatrixX<Scalar> knots = fine.knot_values();
  for (Index i = 0; i < grid.size(); ++i) {
    if (!f.in_domain(knots.col(i))) {
      throw std::domain_error("ac_superpose: path leaves the domain of f at t = " + std::to_string(grid.knot(i)));
    }
  }
  const VectorX<Scalar> start = f.value(eta.start());
  MatrixX<Scalar> values(start.size(), grid.cells());
  for (Index c = 0; c < grid.cells(); ++c) {
    const VectorX<Scalar> mid = Scalar(0.5) * (knots.col(c) + knots.col(c + 1));
    values.col(c) = f.jacobian(mid) * dens.values().col(c);
  }
  return AcPath<Scalar>(start, LpSample<Scalar>(grid, std::move(values), eta.p()));
}

/// q(eta1(a) - eta2(a)) + ||eta1' - eta2'||_{L^p,q}: the metric pulled back through Phi.
template <typename Scalar>
Scalar ac_distance(const AcPath<Scalar>& eta1, const AcPath<Scalar>& eta2, const Seminorm<Scalar>& q) {
  if (eta1.a() != eta2.a() || eta1.b() != eta2.b()) throw std::invalid_argument("ac_distance: interval mismatch");
  if (eta1.p() != eta2.p()) throw std::invalid_argument("ac_distance: exponent mismatch");
  const VectorX<Scalar> ds = eta1.start() - eta2.start();
  return q(ds) + lp_seminorm(eta1.density() - eta2.density(), q);
}

using ContinuousTraced = ContinuousTrace<double>;
using AcPathd = AcPath<double>;
using SmoothMapd = SmoothMap<double>;

}  // namespace evolflow
