#pragma once

// Carathéodory evolution for Diff^r_K(R^n) (and the torus, with periodic fields).
//
// Given a velocity gamma in L^p([0,1], C^r_K), Evol(gamma) is the displacement
// path eta with eta(0) = 0 and
//     eta(t) = int_0^t gamma(s) o (id + eta(s)) ds.
// Pointwise this is the fixed point of the contraction
//     T(gamma, x, zeta)(t) = x + int_0^t gamma(s)(zeta(s)) ds,
// with Lipschitz constant ||gamma||_{L^1,alpha}. When that budget is too large
// the velocity is split into rescaled pieces gamma_{n,k}, each piece is evolved
// on its own, and the pieces are chained with the group law:
//     eta(t) = eta_k(nt - k) * (eta_{k-1}(1) * ... * eta_0(1)).
//
// Time is discretised by refining the velocity grid to cells of width at most
// max_cell_width; inside a cell zeta is linear and gamma is sampled at the cell
// midpoint of zeta, so T is applied exactly to the piecewise-linear iterate.

#include "evolflow/ac_path.hpp"
#include "evolflow/diff_group.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace evolflow {

/// Piecewise-constant velocity t -> gamma(t) in C^r_K on [0,1]; one field per cell.
template <typename Field>
class TimeVelocity {
 public:
  using Scalar = typename Field::scalar_type;

  TimeVelocity() = default;

  TimeVelocity(TimeGrid<Scalar> grid, std::vector<Field> fields, Scalar p = Scalar(1))
      : grid_(std::move(grid)), fields_(std::move(fields)), p_(p) {
    validate();
    alphas_.resize(fields_.size());
    for (std::size_t c = 0; c < fields_.size(); ++c) alphas_[c] = vf_alpha(fields_[c]);
  }

  /// Trusted constructor for derived velocities whose alphas follow by homogeneity.
  TimeVelocity(TimeGrid<Scalar> grid, std::vector<Field> fields, Scalar p, std::vector<Scalar> alphas)
      : grid_(std::move(grid)), fields_(std::move(fields)), p_(p), alphas_(std::move(alphas)) {
    validate();
    if (alphas_.size() != fields_.size()) throw std::invalid_argument("TimeVelocity: alpha count mismatch");
  }

  static TimeVelocity zero(const TimeGrid<Scalar>& grid, std::shared_ptr<const typename Field::Geometry> geometry,
                           Scalar p = Scalar(1)) {
    std::vector<Field> fields(static_cast<std::size_t>(grid.cells()), Field::zero(geometry));
    return TimeVelocity(grid, std::move(fields), p, std::vector<Scalar>(fields.size(), Scalar(0)));
  }

  const TimeGrid<Scalar>& grid() const { return grid_; }
  Index cells() const { return grid_.cells(); }
  const Field& field(Index c) const { return fields_[static_cast<std::size_t>(c)]; }
  const std::vector<Field>& fields() const { return fields_; }
  Scalar alpha(Index c) const { return alphas_[static_cast<std::size_t>(c)]; }
  const std::vector<Scalar>& alphas() const { return alphas_; }
  Scalar p() const { return p_; }
  const std::shared_ptr<const typename Field::Geometry>& geometry_ptr() const { return fields_.front().geometry_ptr(); }
  const typename Field::Geometry& geometry() const { return fields_.front().geometry(); }

  bool is_zero() const {
    for (const auto& f : fields_) {
      if (!f.is_zero()) return false;
    }
    return true;
  }

  /// gamma(t), right-continuous except at t = 1.
  const Field& at(Scalar t) const { return field(grid_.locate(t)); }

  TimeVelocity refined(const TimeGrid<Scalar>& finer) const {
    if (!finer.refines(grid_)) throw std::invalid_argument("TimeVelocity::refined: grid does not refine");
    std::vector<Field> f;
    std::vector<Scalar> a;
    for (Index c = 0; c < finer.cells(); ++c) {
      const Index src = grid_.locate(finer.midpoint(c));
      f.push_back(field(src));
      a.push_back(alpha(src));
    }
    return TimeVelocity(finer, std::move(f), p_, std::move(a));
  }

  friend TimeVelocity operator*(Scalar lambda, const TimeVelocity& g) {
    std::vector<Field> f;
    std::vector<Scalar> a;
    for (Index c = 0; c < g.cells(); ++c) {
      f.push_back(lambda * g.field(c));
      a.push_back(std::abs(lambda) * g.alpha(c));
    }
    return TimeVelocity(g.grid_, std::move(f), g.p_, std::move(a));
  }

  friend TimeVelocity operator+(const TimeVelocity& g1, const TimeVelocity& g2) {
    const auto grid = common_refinement(g1.grid_, g2.grid_);
    std::vector<Field> f;
    for (Index c = 0; c < grid.cells(); ++c) {
      const Scalar mid = grid.midpoint(c);
      f.push_back(g1.at(mid) + g2.at(mid));
    }
    return TimeVelocity(grid, std::move(f), g1.p_);
  }

 private:
  void validate() const {
    if (grid_.a() != Scalar(0) || grid_.b() != Scalar(1)) throw std::invalid_argument("TimeVelocity: grid must span [0,1]");
    if (static_cast<Index>(fields_.size()) != grid_.cells()) throw std::invalid_argument("TimeVelocity: one field per cell");
    if (!(p_ >= Scalar(1))) throw std::invalid_argument("TimeVelocity: exponent must satisfy p >= 1");
    for (const auto& f : fields_) {
      if (!f.same_geometry(fields_.front())) throw std::invalid_argument("TimeVelocity: fields on different grids");
    }
  }

  TimeGrid<Scalar> grid_;
  std::vector<Field> fields_;
  Scalar p_ = Scalar(1);
  std::vector<Scalar> alphas_;
};

/// gamma_{n,k}(t) = gamma((k + t)/n) / n.
template <typename Field>
TimeVelocity<Field> subdivide(const TimeVelocity<Field>& gamma, Index n, Index k) {
  using Scalar = typename Field::scalar_type;
  std::vector<Index> source;
  auto grid = subdivide_grid(gamma.grid(), n, k, &source);
  const Scalar inv_n = Scalar(1) / Scalar(n);
  std::vector<Field> f;
  std::vector<Scalar> a;
  for (Index src : source) {
    f.push_back(inv_n * gamma.field(src));
    a.push_back(inv_n * gamma.alpha(src));
  }
  return TimeVelocity<Field>(std::move(grid), std::move(f), gamma.p(), std::move(a));
}

/// Velocity running gamma1 on [0, 1/2] and gamma2 on [1/2, 1], each time-rescaled
/// by two, so that its pieces for n = 2 are exactly gamma1 and gamma2.
template <typename Field>
TimeVelocity<Field> concatenate(const TimeVelocity<Field>& gamma1, const TimeVelocity<Field>& gamma2) {
  using Scalar = typename Field::scalar_type;
  std::vector<Scalar> knots;
  for (Scalar t : gamma1.grid().knots()) knots.push_back(Scalar(0.5) * t);
  for (std::size_t i = 1; i < gamma2.grid().knots().size(); ++i) {
    knots.push_back(Scalar(0.5) + Scalar(0.5) * gamma2.grid().knots()[i]);
  }
  knots.back() = Scalar(1);
  std::vector<Field> f;
  std::vector<Scalar> a;
  for (Index c = 0; c < gamma1.cells(); ++c) {
    f.push_back(Scalar(2) * gamma1.field(c));
    a.push_back(Scalar(2) * gamma1.alpha(c));
  }
  for (Index c = 0; c < gamma2.cells(); ++c) {
    f.push_back(Scalar(2) * gamma2.field(c));
    a.push_back(Scalar(2) * gamma2.alpha(c));
  }
  return TimeVelocity<Field>(TimeGrid<Scalar>(std::move(knots)), std::move(f), gamma1.p(), std::move(a));
}

template <typename Scalar>
struct ContractionBound {
  /// ||gamma||_{L^1,alpha}: the Lipschitz constant of T.
  Scalar l1 = 0;
  /// ||gamma||_{L^p,alpha}.
  Scalar lp = 0;
};

template <typename Field>
ContractionBound<typename Field::scalar_type> contraction_bound(const TimeVelocity<Field>& gamma) {
  using Scalar = typename Field::scalar_type;
  const auto& g = gamma.grid();
  Scalar l1 = 0;
  Scalar lp = 0;
  Scalar sup = 0;
  const Scalar p = gamma.p();
  for (Index c = 0; c < g.cells(); ++c) {
    l1 += g.width(c) * gamma.alpha(c);
    if (!std::isinf(p)) lp += g.width(c) * std::pow(gamma.alpha(c), p);
    sup = std::max(sup, gamma.alpha(c));
  }
  if (std::isinf(p)) return {l1, sup};
  return {l1, p == Scalar(1) ? lp : std::pow(lp, Scalar(1) / p)};
}

/// ||gamma_{n,k}||_{L^1,alpha} = int_{k/n}^{(k+1)/n} alpha(gamma(s)) ds for k = 0..n-1.
template <typename Field>
std::vector<typename Field::scalar_type> subdivision_budgets(const TimeVelocity<Field>& gamma, Index n) {
  std::vector<typename Field::scalar_type> out;
  for (Index k = 0; k < n; ++k) out.push_back(contraction_bound(subdivide(gamma, n, k)).l1);
  return out;
}

/// s -> gamma(s)(zeta(s)) sampled at the cell midpoints of the common refinement.
template <typename Field>
LpSample<typename Field::scalar_type> apply_along(const TimeVelocity<Field>& gamma,
                                                  const ContinuousTrace<typename Field::scalar_type>& zeta) {
  using Scalar = typename Field::scalar_type;
  if (zeta.dim() != Field::dimension) throw std::invalid_argument("apply_along: trace dimension mismatch");
  const auto grid = common_refinement(gamma.grid(), zeta.grid());
  MatrixX<Scalar> v(Field::dimension, grid.cells());
  for (Index c = 0; c < grid.cells(); ++c) {
    const Scalar mid = grid.midpoint(c);
    const typename Field::Point z = zeta(mid);
    v.col(c) = gamma.at(mid)(z);
  }
  return LpSample<Scalar>(grid, std::move(v), gamma.p());
}

/// T(gamma, x, zeta) on the common refinement of the two grids.
template <typename Field>
ContinuousTrace<typename Field::scalar_type> contraction_operator(const TimeVelocity<Field>& gamma,
                                                                  const typename Field::Point& x,
                                                                  const ContinuousTrace<typename Field::scalar_type>& zeta) {
  const auto dens = apply_along(gamma, zeta);
  const AcPath<typename Field::scalar_type> path(x, dens);
  return ContinuousTrace<typename Field::scalar_type>(dens.grid(), path.knot_values());
}

struct SolverOptions {
  double picard_tol = 1e-10;
  int max_iter = 200;
  /// Largest time step inside the Picard discretisation (in the velocity's own time).
  double max_cell_width = 1.0 / 128.0;
  /// Contraction budget a piece must stay below before it is evolved.
  double l_max = 0.5;
  /// Force the number of pieces (0 = smallest power of two that fits the budget).
  Index forced_segments = 0;
  Index max_segments = 4096;
  /// Lattice pitch h / residual_refinement for the residual check.
  Index residual_refinement = 2;
  /// Certify chart membership of every piece endpoint.
  bool check_membership = true;
};

template <typename Scalar>
struct PointTrajectory {
  AcPath<Scalar> path;
  int iterations = 0;
  Scalar last_change = 0;
  /// sup over knots |zeta - T(zeta)|.
  Scalar residual = 0;
  Scalar bound = 0;
};

namespace detail {

// Picard iteration for one start point on a fixed grid. `fields[c]` is the
// velocity on cell c. Writes knot values and cell densities of the result.
template <typename Field>
void picard_knots(const std::vector<const Field*>& fields, const TimeGrid<typename Field::scalar_type>& grid,
                  const typename Field::Point& x, double tol, int max_iter,
                  Eigen::Matrix<typename Field::scalar_type, Field::dimension, Eigen::Dynamic>& knots,
                  Eigen::Matrix<typename Field::scalar_type, Field::dimension, Eigen::Dynamic>& density,
                  int& iterations, double& change) {
  using Scalar = typename Field::scalar_type;
  using Point = typename Field::Point;
  const Index cells = grid.cells();
  knots = x.replicate(1, cells + 1);
  density.setZero(Field::dimension, cells);
  Eigen::Matrix<Scalar, Field::dimension, Eigen::Dynamic> next(Field::dimension, cells + 1);
  for (int it = 1; it <= max_iter; ++it) {
    next.col(0) = x;
    Scalar delta = 0;
    for (Index c = 0; c < cells; ++c) {
      const Point mid = Scalar(0.5) * (knots.col(c) + knots.col(c + 1));
      const Point v = (*fields[static_cast<std::size_t>(c)])(mid);
      density.col(c) = v;
      next.col(c + 1) = next.col(c) + grid.width(c) * v;
      delta = std::max(delta, (next.col(c + 1) - knots.col(c + 1)).template lpNorm<Eigen::Infinity>());
    }
    knots.swap(next);
    iterations = it;
    change = static_cast<double>(delta);
    if (delta < tol) return;
  }
  std::ostringstream msg;
  msg << "Picard iteration did not converge in " << max_iter << " iterations (last change " << change << ")";
  throw std::runtime_error(msg.str());
}

template <typename Field>
std::vector<const Field*> cell_fields(const TimeVelocity<Field>& gamma, const TimeGrid<typename Field::scalar_type>& fine) {
  std::vector<const Field*> out;
  out.reserve(static_cast<std::size_t>(fine.cells()));
  for (Index c = 0; c < fine.cells(); ++c) out.push_back(&gamma.at(fine.midpoint(c)));
  return out;
}

}  // namespace detail

/// Fixed point of T(gamma, x, .) by Picard iteration from the constant path x.
template <typename Field>
PointTrajectory<typename Field::scalar_type> picard_point(const TimeVelocity<Field>& gamma,
                                                          const typename Field::Point& x,
                                                          const SolverOptions& options = {}) {
  using Scalar = typename Field::scalar_type;
  const Scalar bound = contraction_bound(gamma).l1;
  if (!(bound < Scalar(1))) {
    std::ostringstream msg;
    msg << "picard_point: contraction bound " << bound << " is not below 1";
    throw std::domain_error(msg.str());
  }
  const auto grid = gamma.grid().refined_to_width(options.max_cell_width);
  const auto fields = detail::cell_fields(gamma, grid);
  Eigen::Matrix<Scalar, Field::dimension, Eigen::Dynamic> knots, density;
  int iterations = 0;
  double change = 0;
  detail::picard_knots(fields, grid, x, options.picard_tol, options.max_iter, knots, density, iterations, change);

  PointTrajectory<Scalar> out;
  out.path = AcPath<Scalar>(x, LpSample<Scalar>(grid, MatrixX<Scalar>(density), gamma.p()));
  out.iterations = iterations;
  out.last_change = static_cast<Scalar>(change);
  out.bound = bound;
  // One more application of T measures how far the returned path is from a fixed point.
  const ContinuousTrace<Scalar> trace(grid, MatrixX<Scalar>(knots));
  const auto image = contraction_operator(gamma, x, trace);
  out.residual = (image.values() - trace.values()).cwiseAbs().maxCoeff();
  return out;
}

/// Displacement path with eta(0) = 0 and step density: eta(t) = eta(t_c) + (t - t_c) d_c.
template <typename Field>
class GroupPath {
 public:
  using Scalar = typename Field::scalar_type;

  GroupPath() = default;

  /// Empty path starting at the neutral element at time `a`.
  GroupPath(Scalar a, std::shared_ptr<const typename Field::Geometry> geometry, Scalar p)
      : times_{a}, knots_{Field::zero(std::move(geometry))}, p_(p) {}

  GroupPath(const TimeGrid<Scalar>& grid, const std::vector<Field>& density, Scalar p)
      : GroupPath(grid.a(), density.front().geometry_ptr(), p) {
    if (static_cast<Index>(density.size()) != grid.cells()) throw std::invalid_argument("GroupPath: one density per cell");
    for (Index c = 0; c < grid.cells(); ++c) append(grid.knot(c + 1), density[static_cast<std::size_t>(c)]);
  }

  static GroupPath neutral(const TimeGrid<Scalar>& grid, std::shared_ptr<const typename Field::Geometry> geometry, Scalar p) {
    std::vector<Field> d(static_cast<std::size_t>(grid.cells()), Field::zero(geometry));
    return GroupPath(grid, d, p);
  }

  /// Extends the path to time t with constant density d on the new cell.
  void append(Scalar t, Field d) {
    if (!(t > times_.back())) throw std::invalid_argument("GroupPath::append: time must increase");
    const Scalar w = t - times_.back();
    Field next = d.is_zero() ? knots_.back() : knots_.back() + w * d;
    times_.push_back(t);
    density_.push_back(std::move(d));
    knots_.push_back(std::move(next));
  }

  TimeGrid<Scalar> grid() const { return TimeGrid<Scalar>(times_); }
  const std::vector<Scalar>& times() const { return times_; }
  Index cells() const { return static_cast<Index>(density_.size()); }
  Scalar p() const { return p_; }
  const Field& density(Index c) const { return density_[static_cast<std::size_t>(c)]; }
  const Field& knot(Index i) const { return knots_[static_cast<std::size_t>(i)]; }
  const Field& back() const { return knots_.back(); }
  const std::vector<Field>& densities() const { return density_; }
  const std::shared_ptr<const typename Field::Geometry>& geometry_ptr() const { return knots_.front().geometry_ptr(); }

  Index locate(Scalar t) const {
    if (!(t >= times_.front() && t <= times_.back())) throw std::out_of_range("GroupPath: time outside the path");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return std::clamp<Index>(static_cast<Index>(it - times_.begin()) - 1, 0, std::max<Index>(cells() - 1, 0));
  }

  /// eta(t) as a field.
  Field at(Scalar t) const {
    if (cells() == 0) return knots_.front();
    const Index c = locate(t);
    const Scalar s = t - times_[static_cast<std::size_t>(c)];
    if (s == Scalar(0)) return knot(c);
    return knot(c) + s * density(c);
  }

  /// eta(t)(x) without materialising eta(t).
  typename Field::Point displacement(Scalar t, const typename Field::Point& x) const {
    if (cells() == 0) return knots_.front()(x);
    const Index c = locate(t);
    const Scalar s = t - times_[static_cast<std::size_t>(c)];
    typename Field::Point v = knot(c)(x);
    if (s != Scalar(0)) v += s * density(c)(x);
    return v;
  }

 private:
  std::vector<Scalar> times_;
  std::vector<Field> knots_;
  std::vector<Field> density_;
  Scalar p_ = Scalar(1);
};

struct SegmentDiagnostic {
  Index k = 0;
  double contraction_bound = 0;
  int iterations = 0;
  double picard_change = 0;
  double residual = 0;
};

template <typename Field>
struct EvolutionResult {
  GroupPath<Field> path;
  Index n = 1;
  std::vector<SegmentDiagnostic> segments;
  /// Residual of the integral equation for the whole path.
  double residual = 0;
  /// Declared error bound: exp(||gamma||_{L^1,alpha}) (residual + picard_tol) plus
  /// the largest resampling tolerance among the density fields.
  double tolerance = 0;
  double contraction_l1 = 0;
};

/// sup over knots t and lattice points x of |eta(t)(x) - int_0^t gamma(s)(x + eta(s)(x)) ds|,
/// with Simpson's rule on every cell of the common refinement.
template <typename Field>
typename Field::scalar_type residual(const TimeVelocity<Field>& gamma, const GroupPath<Field>& eta,
                                     Index refinement = 2) {
  using Scalar = typename Field::scalar_type;
  using Point = typename Field::Point;
  const auto grid = common_refinement(gamma.grid(), eta.grid());
  const auto fields = detail::cell_fields(gamma, grid);
  std::vector<Index> path_cell(static_cast<std::size_t>(grid.cells()));
  for (Index c = 0; c < grid.cells(); ++c) path_cell[static_cast<std::size_t>(c)] = eta.locate(grid.midpoint(c));
  const Field probe = eta.knot(0);
  const Index total = lattice_size(probe, refinement);
  std::vector<Scalar> worst(static_cast<std::size_t>(total), Scalar(0));
  parallel_for(total, [&](Index lin) {
    const Point x = lattice_point(probe, refinement, lin);
    Point integral = Point::Zero();
    Index cached = -1;
    Point knot_value = Point::Zero();
    Point slope = Point::Zero();
    Scalar r = 0;
    for (Index c = 0; c < grid.cells(); ++c) {
      const Index pc = path_cell[static_cast<std::size_t>(c)];
      if (pc != cached) {
        knot_value = eta.knot(pc)(x);
        slope = eta.density(pc)(x);
        cached = pc;
      }
      const Scalar base = eta.times()[static_cast<std::size_t>(pc)];
      const Scalar t0 = grid.knot(c);
      const Scalar t1 = grid.knot(c + 1);
      const Point e0 = knot_value + (t0 - base) * slope;
      const Point e1 = knot_value + (t1 - base) * slope;
      const Point em = Scalar(0.5) * (e0 + e1);
      const Field& f = *fields[static_cast<std::size_t>(c)];
      integral += (t1 - t0) / Scalar(6) * (f(x + e0) + Scalar(4) * f(x + em) + f(x + e1));
      r = std::max(r, (e1 - integral).norm());
    }
    worst[static_cast<std::size_t>(lin)] = r;
  });
  Scalar r = 0;
  for (Scalar v : worst) r = std::max(r, v);
  return r;
}

/// Evolution of a velocity whose contraction budget is below options.l_max:
/// Picard iteration for the trajectory of every active grid node at once.
template <typename Field>
EvolutionResult<Field> local_evolve(const TimeVelocity<Field>& gamma, const SolverOptions& options = {}) {
  using Scalar = typename Field::scalar_type;
  constexpr int Dim = Field::dimension;
  const Scalar bound = contraction_bound(gamma).l1;
  if (!(bound < Scalar(options.l_max))) {
    std::ostringstream msg;
    msg << "local_evolve: contraction bound " << bound << " is not below " << options.l_max;
    throw std::domain_error(msg.str());
  }
  const auto grid = gamma.grid().refined_to_width(options.max_cell_width);
  EvolutionResult<Field> result;
  result.n = 1;
  result.contraction_l1 = static_cast<double>(bound);
  if (gamma.is_zero()) {
    result.path = GroupPath<Field>::neutral(grid, gamma.geometry_ptr(), gamma.p());
    result.segments.push_back({0, static_cast<double>(bound), 1, 0.0, 0.0});
    return result;
  }
  const auto fields = detail::cell_fields(gamma, grid);
  const auto& geom = gamma.geometry();
  const Index nodes = geom.active_count();
  const Index cells = grid.cells();

  // samples[c] holds the density of cell c at every node.
  std::vector<typename Field::Coefficients> samples(static_cast<std::size_t>(cells),
                                                    typename Field::Coefficients(Dim, nodes));
  std::vector<int> iterations(static_cast<std::size_t>(nodes), 0);
  std::vector<double> changes(static_cast<std::size_t>(nodes), 0.0);
  parallel_for(nodes, [&](Index j) {
    Eigen::Matrix<Scalar, Dim, Eigen::Dynamic> knots, density;
    detail::picard_knots(fields, grid, geom.active_node(j), options.picard_tol, options.max_iter, knots, density,
                         iterations[static_cast<std::size_t>(j)], changes[static_cast<std::size_t>(j)]);
    for (Index c = 0; c < cells; ++c) samples[static_cast<std::size_t>(c)].col(j) = density.col(c);
  });

  std::vector<Field> dens(static_cast<std::size_t>(cells));
  parallel_for(cells, [&](Index c) {
    dens[static_cast<std::size_t>(c)] = Field::from_samples(gamma.geometry_ptr(), std::move(samples[static_cast<std::size_t>(c)]));
  });
  result.path = GroupPath<Field>(grid, dens, gamma.p());

  SegmentDiagnostic seg;
  seg.contraction_bound = static_cast<double>(bound);
  seg.iterations = *std::max_element(iterations.begin(), iterations.end());
  seg.picard_change = *std::max_element(changes.begin(), changes.end());
  seg.residual = static_cast<double>(residual(gamma, result.path, options.residual_refinement));
  result.segments.push_back(seg);
  result.residual = seg.residual;
  double resample = 0;
  for (const auto& d : dens) resample = std::max(resample, static_cast<double>(resampling_tolerance(d)));
  result.tolerance = std::exp(result.contraction_l1) * (result.residual + options.picard_tol) + resample;
  return result;
}

/// Smallest power of two n for which every piece gamma_{n,k} fits the budget.
template <typename Field>
Index choose_subdivision(const TimeVelocity<Field>& gamma, const SolverOptions& options = {}) {
  for (Index n = 1; n <= options.max_segments; n *= 2) {
    const auto budgets = subdivision_budgets(gamma, n);
    if (*std::max_element(budgets.begin(), budgets.end()) < options.l_max) return n;
  }
  std::ostringstream msg;
  msg << "evolve: no subdivision up to " << options.max_segments << " pieces meets the contraction budget";
  throw std::domain_error(msg.str());
}

/// Evol(gamma) for an arbitrary velocity via subdivision and the group law.
template <typename Field>
EvolutionResult<Field> evolve(const TimeVelocity<Field>& gamma, const SolverOptions& options = {}) {
  using Scalar = typename Field::scalar_type;
  const Index n = options.forced_segments > 0 ? options.forced_segments : choose_subdivision(gamma, options);
  const Scalar total = contraction_bound(gamma).l1;
  if (gamma.is_zero()) {
    EvolutionResult<Field> r;
    r.n = n;
    r.path = GroupPath<Field>::neutral(gamma.grid(), gamma.geometry_ptr(), gamma.p());
    for (Index k = 0; k < n; ++k) r.segments.push_back({k, 0.0, 1, 0.0, 0.0});
    return r;
  }
  SolverOptions piece = options;
  piece.max_cell_width = options.max_cell_width * static_cast<double>(n);

  if (n == 1) {
    auto r = local_evolve(gamma, piece);
    r.contraction_l1 = static_cast<double>(total);
    return r;
  }

  EvolutionResult<Field> result;
  result.n = n;
  result.contraction_l1 = static_cast<double>(total);
  result.path = GroupPath<Field>(Scalar(0), gamma.geometry_ptr(), gamma.p());
  for (Index k = 0; k < n; ++k) {
    const auto part = local_evolve(subdivide(gamma, n, k), piece);
    auto seg = part.segments.front();
    seg.k = k;
    result.segments.push_back(seg);

    // eta(t) = eta_k(nt - k) * P with P = eta(k/n); its density is n d_rho(P, eta_k').
    const Field anchor = result.path.back();
    const bool trivial = anchor.is_zero();
    const auto& times = part.path.times();
    const Scalar lo = Scalar(k) / Scalar(n);
    const Scalar hi = Scalar(k + 1) / Scalar(n);
    std::vector<Field> composed(static_cast<std::size_t>(part.path.cells()));
    for (Index c = 0; c < part.path.cells(); ++c) {
      const Field& d = part.path.density(c);
      composed[static_cast<std::size_t>(c)] = Scalar(n) * (trivial ? d : d_rho(anchor, d));
    }
    for (Index c = 0; c < part.path.cells(); ++c) {
      const Scalar t = (c + 1 == part.path.cells()) ? hi : lo + times[static_cast<std::size_t>(c + 1)] / Scalar(n);
      result.path.append(t, std::move(composed[static_cast<std::size_t>(c)]));
    }
    if (options.check_membership) {
      const auto diag = in_chart_check(result.path.back());
      if (!diag.ok) {
        std::ostringstream msg;
        msg << "evolve: piece endpoint " << k << " left the chart domain (alpha = " << diag.alpha << ")";
        throw std::domain_error(msg.str());
      }
    }
  }
  result.residual = static_cast<double>(residual(gamma, result.path, options.residual_refinement));
  double resample = 0;
  for (const auto& d : result.path.densities()) resample = std::max(resample, static_cast<double>(resampling_tolerance(d)));
  result.tolerance = std::exp(result.contraction_l1) * (result.residual + options.picard_tol) + resample;
  return result;
}

/// (id + eta(t))(x).
template <typename Field>
typename Field::Point flow_point(const EvolutionResult<Field>& result, typename Field::scalar_type t,
                                 const typename Field::Point& x) {
  if (!(t >= 0 && t <= 1)) throw std::out_of_range("flow_point: t outside [0,1]");
  return x + result.path.displacement(t, x);
}

/// Classical RK4 for x' = gamma(t)(x) with step 1/steps; steps that straddle a
/// velocity knot are split there so each step sees one frozen field.
template <typename Field>
PointTrajectory<typename Field::scalar_type> rk4_oracle(const TimeVelocity<Field>& gamma, const typename Field::Point& x,
                                                        Index steps) {
  using Scalar = typename Field::scalar_type;
  using Point = typename Field::Point;
  if (steps < 1) throw std::invalid_argument("rk4_oracle: steps must be positive");
  const auto grid = common_refinement(TimeGrid<Scalar>::uniform(Scalar(0), Scalar(1), steps), gamma.grid());
  MatrixX<Scalar> density(Field::dimension, grid.cells());
  Point y = x;
  for (Index c = 0; c < grid.cells(); ++c) {
    const Field& f = gamma.at(grid.midpoint(c));
    const Scalar h = grid.width(c);
    const Point k1 = f(y);
    const Point k2 = f(y + Scalar(0.5) * h * k1);
    const Point k3 = f(y + Scalar(0.5) * h * k2);
    const Point k4 = f(y + h * k3);
    const Point step = h / Scalar(6) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    density.col(c) = step / h;
    y += step;
  }
  PointTrajectory<Scalar> out;
  out.path = AcPath<Scalar>(x, LpSample<Scalar>(grid, std::move(density), gamma.p()));
  out.iterations = 0;
  return out;
}

/// Distance of displacement paths pulled back through the chart: sup-distance of the
/// starting fields plus the L^p distance of the densities in the C^1 sup-seminorm.
template <typename Field>
typename Field::scalar_type group_path_distance(const GroupPath<Field>& eta1, const GroupPath<Field>& eta2,
                                                Index refinement = 4) {
  using Scalar = typename Field::scalar_type;
  if (eta1.times().front() != eta2.times().front() || eta1.times().back() != eta2.times().back()) {
    throw std::invalid_argument("group_path_distance: interval mismatch");
  }
  const Scalar start = vf_sup_norm(eta1.knot(0) - eta2.knot(0), refinement);
  const auto grid = common_refinement(eta1.grid(), eta2.grid());
  const Scalar p = eta1.p();
  std::vector<Scalar> cell(static_cast<std::size_t>(grid.cells()));
  for (Index c = 0; c < grid.cells(); ++c) {
    const Scalar mid = grid.midpoint(c);
    const Field diff = eta1.density(eta1.locate(mid)) - eta2.density(eta2.locate(mid));
    cell[static_cast<std::size_t>(c)] = vf_cr_seminorm(diff, refinement);
  }
  Scalar acc = 0;
  for (Index c = 0; c < grid.cells(); ++c) {
    const Scalar v = cell[static_cast<std::size_t>(c)];
    if (std::isinf(p)) {
      acc = std::max(acc, v);
    } else {
      acc += grid.width(c) * (p == Scalar(1) ? v : std::pow(v, p));
    }
  }
  if (!std::isinf(p) && p != Scalar(1)) acc = std::pow(acc, Scalar(1) / p);
  return start + acc;
}

template <typename Scalar>
struct ProbeRow {
  Index level = 0;
  Scalar scale = 0;
  Scalar distance = 0;
};

/// d_k = dist(Evol(gamma + 2^-k delta), Evol(gamma)) for k = 0..levels-1. Every
/// level is evolved on the same time grid with the same number of pieces, so the
/// sequence compares solutions and not discretisations.
template <typename Field>
std::vector<ProbeRow<typename Field::scalar_type>> continuity_probe(const TimeVelocity<Field>& gamma,
                                                                    const TimeVelocity<Field>& delta, Index levels,
                                                                    const SolverOptions& options = {}) {
  using Scalar = typename Field::scalar_type;
  if (levels < 2) throw std::invalid_argument("continuity_probe: need at least two levels");
  const auto base_velocity = gamma.refined(common_refinement(gamma.grid(), delta.grid()));
  std::vector<TimeVelocity<Field>> moved;
  std::vector<Scalar> scales;
  Index n = options.forced_segments > 0 ? options.forced_segments : choose_subdivision(base_velocity, options);
  for (Index k = 0; k < levels; ++k) {
    scales.push_back(std::ldexp(Scalar(1), -static_cast<int>(k)));
    moved.push_back(base_velocity + scales.back() * delta);
    if (options.forced_segments == 0) n = std::max(n, choose_subdivision(moved.back(), options));
  }
  SolverOptions fixed = options;
  fixed.forced_segments = n;
  const auto base = evolve(base_velocity, fixed);
  std::vector<ProbeRow<Scalar>> rows;
  for (Index k = 0; k < levels; ++k) {
    const auto result = evolve(moved[static_cast<std::size_t>(k)], fixed);
    rows.push_back({k, scales[static_cast<std::size_t>(k)], group_path_distance(result.path, base.path)});
  }
  return rows;
}

}  // namespace evolflow
