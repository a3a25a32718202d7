#pragma once

// Step-function representatives of L^p([a,b], R^m), their seminorms, weak
// integrals and the subdivision operator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evolflow {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
constexpr Scalar infinite_exponent() {
  return std::numeric_limits<Scalar>::infinity();
}

/// Strictly increasing knots a = s_0 < ... < s_M = b.
template <typename Scalar>
class TimeGrid {
 public:
  TimeGrid() : knots_{Scalar(0), Scalar(1)} {}

  explicit TimeGrid(std::vector<Scalar> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) {
      throw std::invalid_argument("TimeGrid: at least two knots are required");
    }
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (!std::isfinite(knots_[i])) {
        throw std::invalid_argument("TimeGrid: non-finite knot");
      }
      if (i > 0 && !(knots_[i] > knots_[i - 1])) {
        throw std::invalid_argument("TimeGrid: knots must be strictly increasing");
      }
    }
  }

  static TimeGrid uniform(Scalar a, Scalar b, Index cells) {
    if (cells < 1) throw std::invalid_argument("TimeGrid::uniform: cells must be positive");
    std::vector<Scalar> k(static_cast<std::size_t>(cells) + 1);
    for (Index i = 0; i <= cells; ++i) {
      k[static_cast<std::size_t>(i)] = a + (b - a) * Scalar(i) / Scalar(cells);
    }
    k.front() = a;
    k.back() = b;
    return TimeGrid(std::move(k));
  }

  Scalar a() const { return knots_.front(); }
  Scalar b() const { return knots_.back(); }
  Index cells() const { return static_cast<Index>(knots_.size()) - 1; }
  Index size() const { return static_cast<Index>(knots_.size()); }
  const std::vector<Scalar>& knots() const { return knots_; }
  Scalar knot(Index i) const { return knots_[static_cast<std::size_t>(i)]; }
  Scalar width(Index c) const { return knot(c + 1) - knot(c); }
  Scalar midpoint(Index c) const { return Scalar(0.5) * (knot(c) + knot(c + 1)); }
  Scalar length() const { return b() - a(); }

  bool contains(Scalar t) const { return t >= a() && t <= b(); }

  /// Cell containing t; the last cell is closed on the right.
  Index locate(Scalar t) const {
    if (!contains(t)) throw std::out_of_range("TimeGrid::locate: time outside [a,b]");
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    Index c = static_cast<Index>(it - knots_.begin()) - 1;
    return std::clamp<Index>(c, 0, cells() - 1);
  }

  /// True when every knot of `coarse` is a knot of this grid.
  bool refines(const TimeGrid& coarse) const {
    if (coarse.a() != a() || coarse.b() != b()) return false;
    return std::includes(knots_.begin(), knots_.end(), coarse.knots_.begin(), coarse.knots_.end());
  }

  /// Split every cell into `parts` equal pieces.
  TimeGrid refined(Index parts) const {
    if (parts < 1) throw std::invalid_argument("TimeGrid::refined: parts must be positive");
    if (parts == 1) return *this;
    std::vector<Scalar> k;
    k.reserve(static_cast<std::size_t>(cells() * parts + 1));
    for (Index c = 0; c < cells(); ++c) {
      for (Index j = 0; j < parts; ++j) k.push_back(knot(c) + width(c) * Scalar(j) / Scalar(parts));
    }
    k.push_back(b());
    return TimeGrid(std::move(k));
  }

  /// Split each cell into the fewest equal pieces of width <= max_width.
  TimeGrid refined_to_width(Scalar max_width) const {
    if (!(max_width > 0)) throw std::invalid_argument("TimeGrid: max_width must be positive");
    std::vector<Scalar> k;
    for (Index c = 0; c < cells(); ++c) {
      const Index parts = std::max<Index>(1, static_cast<Index>(std::ceil(width(c) / max_width - Scalar(1e-9))));
      for (Index j = 0; j < parts; ++j) k.push_back(knot(c) + width(c) * Scalar(j) / Scalar(parts));
    }
    k.push_back(b());
    return TimeGrid(std::move(k));
  }

  /// Image of the grid under the affine map sending [a,b] onto [c,d].
  TimeGrid mapped(Scalar c, Scalar d) const {
    if (!(c < d)) throw std::invalid_argument("TimeGrid::mapped: need c < d");
    std::vector<Scalar> k(knots_.size());
    const Scalar scale = (d - c) / length();
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = c + (knots_[i] - a()) * scale;
    k.front() = c;
    k.back() = d;
    return TimeGrid(std::move(k));
  }

  bool operator==(const TimeGrid& other) const { return knots_ == other.knots_; }

 private:
  std::vector<Scalar> knots_;
};

/// Union of the knots of two grids over the same interval.
template <typename Scalar>
TimeGrid<Scalar> common_refinement(const TimeGrid<Scalar>& g1, const TimeGrid<Scalar>& g2) {
  if (g1.a() != g2.a() || g1.b() != g2.b()) {
    throw std::invalid_argument("common_refinement: grids live on different intervals");
  }
  std::vector<Scalar> k;
  k.reserve(g1.knots().size() + g2.knots().size());
  std::merge(g1.knots().begin(), g1.knots().end(), g2.knots().begin(), g2.knots().end(),
             std::back_inserter(k));
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return TimeGrid<Scalar>(std::move(k));
}

/// Knots of `grid` inside [k/n, (k+1)/n], mapped by s -> n s - k onto [0,1].
/// `source_cell[i]` is the cell of `grid` that new cell i came from.
template <typename Scalar>
TimeGrid<Scalar> subdivide_grid(const TimeGrid<Scalar>& grid, Index n, Index k,
                                std::vector<Index>* source_cell = nullptr) {
  if (grid.a() != Scalar(0) || grid.b() != Scalar(1)) {
    throw std::invalid_argument("subdivide: function must be defined on [0,1]");
  }
  if (n < 1) throw std::invalid_argument("subdivide: n must be positive");
  if (k < 0 || k >= n) throw std::out_of_range("subdivide: k must lie in [0, n-1]");
  const Scalar lo = Scalar(k) / Scalar(n);
  const Scalar hi = Scalar(k + 1) / Scalar(n);
  const Scalar eps = Scalar(64) * std::numeric_limits<Scalar>::epsilon();
  std::vector<Scalar> knots{Scalar(0)};
  for (Scalar s : grid.knots()) {
    const Scalar u = Scalar(n) * s - Scalar(k);
    if (u > eps && u < Scalar(1) - eps) knots.push_back(u);
  }
  knots.push_back(Scalar(1));
  if (source_cell) {
    source_cell->clear();
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      const Scalar mid = lo + Scalar(0.5) * (knots[i] + knots[i + 1]) * (hi - lo);
      source_cell->push_back(grid.locate(mid));
    }
  }
  return TimeGrid<Scalar>(std::move(knots));
}

enum class Interpolation { constant, linear };

/// Representative of [gamma] in L^p([a,b], R^m). Values are stored column-wise:
/// one column per cell (constant mode) or per knot (linear mode).
template <typename Scalar>
class LpSample {
 public:
  LpSample() = default;

  LpSample(TimeGrid<Scalar> grid, MatrixX<Scalar> values, Scalar p,
           Interpolation mode = Interpolation::constant)
      : grid_(std::move(grid)), values_(std::move(values)), p_(p), mode_(mode) {
    if (!(p_ >= Scalar(1))) throw std::invalid_argument("LpSample: exponent must satisfy p >= 1");
    const Index expected = mode_ == Interpolation::constant ? grid_.cells() : grid_.size();
    if (values_.cols() != expected) {
      throw std::invalid_argument("LpSample: value count does not match the grid");
    }
    if (values_.rows() < 1) throw std::invalid_argument("LpSample: empty value dimension");
    if (!values_.allFinite()) throw std::invalid_argument("LpSample: non-finite values");
  }

  static LpSample constant_value(const TimeGrid<Scalar>& grid, const VectorX<Scalar>& v, Scalar p) {
    return LpSample(grid, v.replicate(1, grid.cells()), p);
  }

  static LpSample zero(const TimeGrid<Scalar>& grid, Index dim, Scalar p) {
    return LpSample(grid, MatrixX<Scalar>::Zero(dim, grid.cells()), p);
  }

  const TimeGrid<Scalar>& grid() const { return grid_; }
  const MatrixX<Scalar>& values() const { return values_; }
  Scalar p() const { return p_; }
  Interpolation mode() const { return mode_; }
  Index dim() const { return values_.rows(); }
  Scalar a() const { return grid_.a(); }
  Scalar b() const { return grid_.b(); }

  /// Value of the representative at t (left-continuous choice is irrelevant in L^p).
  VectorX<Scalar> operator()(Scalar t) const {
    const Index c = grid_.locate(t);
    if (mode_ == Interpolation::constant) return values_.col(c);
    const Scalar lam = (t - grid_.knot(c)) / grid_.width(c);
    return (Scalar(1) - lam) * values_.col(c) + lam * values_.col(c + 1);
  }

  /// Same class expressed on a finer grid (exact for both modes).
  LpSample refined(const TimeGrid<Scalar>& finer) const {
    if (!finer.refines(grid_)) throw std::invalid_argument("LpSample::refined: grid does not refine");
    if (mode_ == Interpolation::constant) {
      MatrixX<Scalar> v(dim(), finer.cells());
      for (Index c = 0; c < finer.cells(); ++c) v.col(c) = values_.col(grid_.locate(finer.midpoint(c)));
      return LpSample(finer, std::move(v), p_, mode_);
    }
    MatrixX<Scalar> v(dim(), finer.size());
    for (Index i = 0; i < finer.size(); ++i) v.col(i) = (*this)(finer.knot(i));
    return LpSample(finer, std::move(v), p_, mode_);
  }

  /// Piecewise-constant version with cell averages (exact for constant mode).
  LpSample cell_averages() const {
    if (mode_ == Interpolation::constant) return *this;
    MatrixX<Scalar> v(dim(), grid_.cells());
    for (Index c = 0; c < grid_.cells(); ++c) v.col(c) = Scalar(0.5) * (values_.col(c) + values_.col(c + 1));
    return LpSample(grid_, std::move(v), p_, Interpolation::constant);
  }

  LpSample with_exponent(Scalar p) const { return LpSample(grid_, values_, p, mode_); }

  LpSample operator-() const { return LpSample(grid_, -values_, p_, mode_); }

  friend LpSample operator*(Scalar lambda, const LpSample& f) {
    return LpSample(f.grid_, lambda * f.values_, f.p_, f.mode_);
  }

  friend LpSample operator+(const LpSample& f, const LpSample& g) { return combine(f, g, Scalar(1)); }
  friend LpSample operator-(const LpSample& f, const LpSample& g) { return combine(f, g, Scalar(-1)); }

 private:
  static LpSample combine(const LpSample& f, const LpSample& g, Scalar sign) {
    if (f.dim() != g.dim()) throw std::invalid_argument("LpSample: dimension mismatch");
    if (f.mode_ != g.mode_) throw std::invalid_argument("LpSample: mixing constant and linear samples");
    if (f.grid_ == g.grid_) return LpSample(f.grid_, f.values_ + sign * g.values_, f.p_, f.mode_);
    const auto grid = common_refinement(f.grid_, g.grid_);
    const auto fr = f.refined(grid);
    const auto gr = g.refined(grid);
    return LpSample(grid, fr.values_ + sign * gr.values_, f.p_, f.mode_);
  }

  TimeGrid<Scalar> grid_;
  MatrixX<Scalar> values_;
  Scalar p_ = Scalar(1);
  Interpolation mode_ = Interpolation::constant;
};

enum class SeminormKind { euclidean, sup, weighted, field_alpha, field_cr, custom };

/// Continuous seminorm q on R^m. `dim < 0` accepts any dimension.
template <typename Scalar>
struct Seminorm {
  SeminormKind kind = SeminormKind::euclidean;
  Index dim = -1;
  std::function<Scalar(const Eigen::Ref<const VectorX<Scalar>>&)> eval;

  Scalar operator()(const Eigen::Ref<const VectorX<Scalar>>& v) const {
    if (dim >= 0 && v.size() != dim) throw std::invalid_argument("Seminorm: dimension mismatch");
    return eval(v);
  }

  static Seminorm euclidean() {
    return {SeminormKind::euclidean, -1, [](const Eigen::Ref<const VectorX<Scalar>>& v) { return v.norm(); }};
  }
  static Seminorm sup() {
    return {SeminormKind::sup, -1,
            [](const Eigen::Ref<const VectorX<Scalar>>& v) { return v.template lpNorm<Eigen::Infinity>(); }};
  }
  /// q(v) = sum_i w_i |v_i|; zero weights make it a proper seminorm.
  static Seminorm weighted(VectorX<Scalar> w) {
    if ((w.array() < Scalar(0)).any()) throw std::invalid_argument("Seminorm::weighted: negative weight");
    const Index d = w.size();
    return {SeminormKind::weighted, d,
            [w = std::move(w)](const Eigen::Ref<const VectorX<Scalar>>& v) { return w.dot(v.cwiseAbs()); }};
  }
};

namespace detail {

// 8-point Gauss-Legendre on [-1, 1].
inline constexpr double kGaussNodes[8] = {-0.96028985649753623, -0.79666647741362674, -0.52553240991632899,
                                          -0.18343464249564980, 0.18343464249564980,  0.52553240991632899,
                                          0.79666647741362674,  0.96028985649753623};
inline constexpr double kGaussWeights[8] = {0.10122853629037626, 0.22238103445337447, 0.31370664587788729,
                                            0.36268378337836198, 0.36268378337836198, 0.31370664587788729,
                                            0.22238103445337447, 0.10122853629037626};

template <typename Scalar>
void check_seminorm_dim(const LpSample<Scalar>& f, const Seminorm<Scalar>& q) {
  if (q.dim >= 0 && q.dim != f.dim()) throw std::invalid_argument("seminorm dimension does not match sample");
}

}  // namespace detail

/// max over cells (constant mode) or knots (linear mode) of q(f).
template <typename Scalar>
Scalar ess_sup_seminorm(const LpSample<Scalar>& f, const Seminorm<Scalar>& q) {
  detail::check_seminorm_dim(f, q);
  Scalar m = 0;
  for (Index j = 0; j < f.values().cols(); ++j) m = std::max(m, q(f.values().col(j)));
  return m;
}

/// ||f||_{L^p,q} = (int_a^b q(f(t))^p dt)^{1/p}; p = inf gives the essential sup.
/// Exact for constant mode; linear mode uses 8-point Gauss-Legendre per cell.
template <typename Scalar>
Scalar lp_seminorm(const LpSample<Scalar>& f, const Seminorm<Scalar>& q) {
  detail::check_seminorm_dim(f, q);
  const Scalar p = f.p();
  if (std::isinf(p)) return ess_sup_seminorm(f, q);
  const auto& g = f.grid();
  Scalar acc = 0;
  if (f.mode() == Interpolation::constant) {
    for (Index c = 0; c < g.cells(); ++c) {
      const Scalar v = q(f.values().col(c));
      acc += g.width(c) * (p == Scalar(1) ? v : std::pow(v, p));
    }
  } else {
    for (Index c = 0; c < g.cells(); ++c) {
      Scalar cell = 0;
      for (int i = 0; i < 8; ++i) {
        const Scalar lam = Scalar(0.5) * (Scalar(detail::kGaussNodes[i]) + Scalar(1));
        const VectorX<Scalar> v = (Scalar(1) - lam) * f.values().col(c) + lam * f.values().col(c + 1);
        const Scalar qv = q(v);
        cell += Scalar(detail::kGaussWeights[i]) * (p == Scalar(1) ? qv : std::pow(qv, p));
      }
      acc += Scalar(0.5) * g.width(c) * cell;
    }
  }
  return p == Scalar(1) ? acc : std::pow(acc, Scalar(1) / p);
}

/// Exact integral of the representative over [t0, t1].
template <typename Scalar>
VectorX<Scalar> weak_integral(const LpSample<Scalar>& f, Scalar t0, Scalar t1) {
  if (t0 > t1) throw std::invalid_argument("weak_integral: t0 > t1");
  const auto& g = f.grid();
  if (!g.contains(t0) || !g.contains(t1)) throw std::out_of_range("weak_integral: bounds outside [a,b]");
  VectorX<Scalar> acc = VectorX<Scalar>::Zero(f.dim());
  if (t0 == t1) return acc;
  const Index c0 = g.locate(t0);
  const Index c1 = g.locate(t1);
  for (Index c = c0; c <= c1; ++c) {
    const Scalar lo = std::max(t0, g.knot(c));
    const Scalar hi = std::min(t1, g.knot(c + 1));
    if (!(hi > lo)) continue;
    if (f.mode() == Interpolation::constant) {
      acc += (hi - lo) * f.values().col(c);
    } else {
      acc += Scalar(0.5) * (hi - lo) * (f(lo) + f(hi));
    }
  }
  return acc;
}

/// gamma_{n,k}(t) = gamma((k+t)/n) / n on [0,1]. Exact for both modes.
template <typename Scalar>
LpSample<Scalar> subdivide(const LpSample<Scalar>& f, Index n, Index k) {
  std::vector<Index> source;
  auto grid = subdivide_grid(f.grid(), n, k, &source);
  const Scalar inv_n = Scalar(1) / Scalar(n);
  if (f.mode() == Interpolation::constant) {
    MatrixX<Scalar> v(f.dim(), grid.cells());
    for (Index c = 0; c < grid.cells(); ++c) v.col(c) = inv_n * f.values().col(source[static_cast<std::size_t>(c)]);
    return LpSample<Scalar>(std::move(grid), std::move(v), f.p());
  }
  MatrixX<Scalar> v(f.dim(), grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const Scalar s = std::clamp((Scalar(k) + grid.knot(i)) / Scalar(n), Scalar(0), Scalar(1));
    v.col(i) = inv_n * f(s);
  }
  return LpSample<Scalar>(std::move(grid), std::move(v), f.p(), Interpolation::linear);
}

/// Equality of L^p classes: values agree on every cell of the common refinement.
template <typename Scalar>
bool equivalent(const LpSample<Scalar>& f, const LpSample<Scalar>& g, Scalar tol = Scalar(0)) {
  if (f.dim() != g.dim() || f.a() != g.a() || f.b() != g.b()) return false;
  const auto fc = f.cell_averages();
  const auto gc = g.cell_averages();
  const auto grid = common_refinement(fc.grid(), gc.grid());
  const auto fr = fc.refined(grid);
  const auto gr = gc.refined(grid);
  if (f.mode() == Interpolation::linear || g.mode() == Interpolation::linear) {
    // Linear pieces agree a.e. iff they agree at every knot of the refinement.
    for (Index i = 0; i < grid.size(); ++i) {
      if ((f(grid.knot(i)) - g(grid.knot(i))).template lpNorm<Eigen::Infinity>() > tol) return false;
    }
    return true;
  }
  return (fr.values() - gr.values()).template lpNorm<Eigen::Infinity>() <= tol;
}

using TimeGridd = TimeGrid<double>;
using LpSampled = LpSample<double>;
using Seminormd = Seminorm<double>;

}  // namespace evolflow
