#pragma once

// C^2 vector fields on R^n represented by cubic B-spline coefficients on a
// uniform grid. Two boundary models share the implementation:
//
//   compact   the space C^r_K(R^n, R^n): nodes lo + j h, j = 0..N per axis, and
//             only j in [2, N-2] may carry a nonzero coefficient, so the field
//             and its Jacobian vanish identically outside K = [lo, hi].
//   periodic  fields on the flat torus [lo, hi)^n: N nodes per axis, indices wrap.
//
// Node samples are turned into coefficients by solving the interpolation system
// (1/6, 4/6, 1/6) along each axis, so fields interpolate their node values.

#include "evolflow/lp_space.hpp"
#include "evolflow/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace evolflow {

enum class Boundary { compact, periodic };

namespace detail {

/// Cubic B-spline weights for the nodes base-1 .. base+2 at fractional offset f.
template <typename Scalar>
inline void bspline_weights(Scalar f, Scalar* w) {
  const Scalar g = Scalar(1) - f;
  const Scalar f2 = f * f;
  const Scalar f3 = f2 * f;
  w[0] = g * g * g / Scalar(6);
  w[1] = (Scalar(3) * f3 - Scalar(6) * f2 + Scalar(4)) / Scalar(6);
  w[2] = (-Scalar(3) * f3 + Scalar(3) * f2 + Scalar(3) * f + Scalar(1)) / Scalar(6);
  w[3] = f3 / Scalar(6);
}

template <typename Scalar>
inline void bspline_derivative_weights(Scalar f, Scalar* dw) {
  const Scalar g = Scalar(1) - f;
  dw[0] = -g * g / Scalar(2);
  dw[1] = (Scalar(3) * f * f - Scalar(4) * f) / Scalar(2);
  dw[2] = (-Scalar(3) * f * f + Scalar(2) * f + Scalar(1)) / Scalar(2);
  dw[3] = f * f / Scalar(2);
}

template <int Dim>
constexpr int pow4() {
  int r = 1;
  for (int i = 0; i < Dim; ++i) r *= 4;
  return r;
}

}  // namespace detail

/// Largest singular value. Closed forms for n <= 2, direct symmetric eigensolve for n = 3.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() == 1 && a.cols() == 1) return std::abs(a(0, 0));
  if (a.rows() == 2 && a.cols() == 2) {
    const Scalar s = a.squaredNorm();
    const Scalar det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const Scalar disc = std::max(Scalar(0), s * s - Scalar(4) * det * det);
    return std::sqrt(Scalar(0.5) * (s + std::sqrt(disc)));
  }
  constexpr bool may_be_3x3 = (Derived::RowsAtCompileTime == 3 || Derived::RowsAtCompileTime == Eigen::Dynamic) &&
                              (Derived::ColsAtCompileTime == 3 || Derived::ColsAtCompileTime == Eigen::Dynamic);
  if constexpr (may_be_3x3) {
    if (a.rows() == 3 && a.cols() == 3) {
      const Eigen::Matrix<Scalar, 3, 3> m = a;
      const Eigen::Matrix<Scalar, 3, 3> ata = m.transpose() * m;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> es;
      es.computeDirect(ata, Eigen::EigenvaluesOnly);
      return std::sqrt(std::max(Scalar(0), es.eigenvalues().maxCoeff()));
    }
  }
  const MatrixX<Scalar> ata = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(ata, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(Scalar(0), es.eigenvalues().maxCoeff()));
}

/// Grid shared by fields; immutable and cheap to share.
template <typename Scalar, int Dim, Boundary B>
class GridGeometry {
 public:
  using Point = Eigen::Matrix<Scalar, Dim, 1>;

  GridGeometry(const Point& lo, const Point& hi, Scalar h) : lo_(lo), hi_(hi), h_(h) {
    if (!(h > 0) || !std::isfinite(h)) throw std::invalid_argument("GridGeometry: spacing must be positive");
    for (int i = 0; i < Dim; ++i) {
      const Scalar len = hi[i] - lo[i];
      if (!(len > 0)) throw std::invalid_argument("GridGeometry: empty box");
      const Scalar cells = std::round(len / h);
      if (std::abs(cells * h - len) > Scalar(1e-9) * len) {
        throw std::invalid_argument("GridGeometry: box side is not a multiple of the spacing");
      }
      cells_[i] = static_cast<Index>(cells);
      if constexpr (B == Boundary::compact) {
        if (cells_[i] < 6) throw std::invalid_argument("GridGeometry: need at least 6 cells per axis");
        active_[i] = cells_[i] - 3;
      } else {
        if (cells_[i] < 4) throw std::invalid_argument("GridGeometry: need at least 4 cells per axis");
        active_[i] = cells_[i];
      }
    }
    count_ = 1;
    for (int i = Dim - 1; i >= 0; --i) {
      stride_[i] = count_;
      count_ *= active_[i];
    }
    for (int i = 0; i < Dim; ++i) build_axis(i);
  }

  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  Scalar h() const { return h_; }
  /// Grid cells along an axis (compact: N, nodes 0..N; periodic: N nodes).
  Index cells(int axis) const { return cells_[axis]; }
  /// Nodes that may carry coefficients along an axis.
  Index active(int axis) const { return active_[axis]; }
  Index active_count() const { return count_; }
  Index stride(int axis) const { return stride_[axis]; }
  /// First grid index that carries a coefficient.
  static constexpr Index first_active() { return B == Boundary::compact ? 2 : 0; }
  /// Node count per axis as stored in files (compact: N+1, periodic: N).
  Index file_nodes(int axis) const { return B == Boundary::compact ? cells_[axis] + 1 : cells_[axis]; }

  /// Multi-index of an active node in active coordinates.
  std::array<Index, Dim> unravel(Index linear) const {
    std::array<Index, Dim> idx{};
    for (int i = 0; i < Dim; ++i) {
      idx[i] = linear / stride_[i];
      linear -= idx[i] * stride_[i];
    }
    return idx;
  }

  Point active_node(Index linear) const {
    const auto idx = unravel(linear);
    Point x;
    for (int i = 0; i < Dim; ++i) x[i] = lo_[i] + h_ * Scalar(idx[i] + first_active());
    return x;
  }

  /// Interpolation operator (1/6, 4/6, 1/6) restricted to the active range and its inverse.
  const MatrixX<Scalar>& forward(int axis) const { return forward_[axis]; }
  const MatrixX<Scalar>& inverse(int axis) const { return inverse_[axis]; }

  bool operator==(const GridGeometry& o) const {
    return lo_ == o.lo_ && hi_ == o.hi_ && h_ == o.h_ && cells_ == o.cells_;
  }
  bool operator!=(const GridGeometry& o) const { return !(*this == o); }

 private:
  void build_axis(int axis) {
    const Index n = active_[axis];
    MatrixX<Scalar> m = MatrixX<Scalar>::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      m(j, j) = Scalar(4) / Scalar(6);
      if constexpr (B == Boundary::compact) {
        if (j > 0) m(j, j - 1) = Scalar(1) / Scalar(6);
        if (j + 1 < n) m(j, j + 1) = Scalar(1) / Scalar(6);
      } else {
        m(j, (j + n - 1) % n) += Scalar(1) / Scalar(6);
        m(j, (j + 1) % n) += Scalar(1) / Scalar(6);
      }
    }
    forward_[axis] = m;
    inverse_[axis] = m.partialPivLu().inverse();
  }

  Point lo_, hi_;
  Scalar h_;
  std::array<Index, Dim> cells_{}, active_{}, stride_{};
  Index count_ = 0;
  std::array<MatrixX<Scalar>, Dim> forward_, inverse_;
};

/// Cubic B-spline vector field R^n -> R^n. Immutable value type.
template <typename Scalar, int Dim, Boundary B>
class SplineField {
 public:
  using Geometry = GridGeometry<Scalar, Dim, B>;
  using Point = Eigen::Matrix<Scalar, Dim, 1>;
  using Jacobian = Eigen::Matrix<Scalar, Dim, Dim>;
  using Coefficients = Eigen::Matrix<Scalar, Dim, Eigen::Dynamic>;
  using scalar_type = Scalar;
  static constexpr int dimension = Dim;
  static constexpr Boundary boundary = B;

  SplineField() = default;

  SplineField(std::shared_ptr<const Geometry> geometry, Coefficients coefficients)
      : geometry_(std::move(geometry)), coefficients_(std::move(coefficients)) {
    if (!geometry_) throw std::invalid_argument("SplineField: null geometry");
    if (coefficients_.cols() != geometry_->active_count()) {
      throw std::invalid_argument("SplineField: coefficient count does not match the grid");
    }
    if (!coefficients_.allFinite()) throw std::invalid_argument("SplineField: non-finite coefficients");
  }

  static SplineField zero(std::shared_ptr<const Geometry> geometry) {
    const Index n = geometry->active_count();
    return SplineField(std::move(geometry), Coefficients::Zero(Dim, n));
  }

  /// Interpolant of samples given at the active nodes (one column per node).
  static SplineField from_samples(std::shared_ptr<const Geometry> geometry, Coefficients samples) {
    apply_axes(*geometry, samples, /*inverse=*/true);
    return SplineField(std::move(geometry), std::move(samples));
  }

  template <typename Fn>
  static SplineField from_function(std::shared_ptr<const Geometry> geometry, Fn&& fn) {
    Coefficients samples(Dim, geometry->active_count());
    for (Index j = 0; j < samples.cols(); ++j) samples.col(j) = fn(geometry->active_node(j));
    return from_samples(std::move(geometry), std::move(samples));
  }

  const std::shared_ptr<const Geometry>& geometry_ptr() const { return geometry_; }
  const Geometry& geometry() const { return *geometry_; }
  const Coefficients& coefficients() const { return coefficients_; }
  Scalar h() const { return geometry_->h(); }

  bool is_zero() const { return (coefficients_.array() == Scalar(0)).all(); }

  /// Field values at the active nodes.
  Coefficients node_values() const {
    Coefficients v = coefficients_;
    apply_axes(*geometry_, v, /*inverse=*/false);
    return v;
  }

  bool inside(const Point& x) const {
    if constexpr (B == Boundary::periodic) {
      return x.allFinite();
    } else {
      for (int i = 0; i < Dim; ++i) {
        if (!(x[i] >= geometry_->lo()[i] && x[i] <= geometry_->hi()[i])) return false;
      }
      return true;
    }
  }

  Point operator()(const Point& x) const {
    Point out = Point::Zero();
    if (!inside(x)) return out;
    Stencil s;
    if (!locate(x, s, false)) return out;
    for (int combo = 0; combo < detail::pow4<Dim>(); ++combo) {
      Index lin = 0;
      Scalar w = 1;
      int c = combo;
      for (int i = Dim - 1; i >= 0; --i) {
        const int k = c & 3;
        c >>= 2;
        w *= s.w[i][k];
        lin += s.index[i][k] * geometry_->stride(i);
      }
      if (w != Scalar(0)) out.noalias() += w * coefficients_.col(lin);
    }
    return out;
  }

  Jacobian jacobian(const Point& x) const {
    Jacobian out = Jacobian::Zero();
    if (!inside(x)) return out;
    Stencil s;
    if (!locate(x, s, true)) return out;
    const Scalar inv_h = Scalar(1) / geometry_->h();
    for (int combo = 0; combo < detail::pow4<Dim>(); ++combo) {
      Index lin = 0;
      std::array<int, Dim> k{};
      int c = combo;
      bool live = true;
      for (int i = Dim - 1; i >= 0; --i) {
        k[i] = c & 3;
        c >>= 2;
        if (s.w[i][k[i]] == Scalar(0) && s.dw[i][k[i]] == Scalar(0)) live = false;
        lin += s.index[i][k[i]] * geometry_->stride(i);
      }
      if (!live) continue;
      for (int d = 0; d < Dim; ++d) {
        Scalar w = inv_h;
        for (int i = 0; i < Dim; ++i) w *= (i == d ? s.dw[i][k[i]] : s.w[i][k[i]]);
        out.col(d).noalias() += w * coefficients_.col(lin);
      }
    }
    return out;
  }

  SplineField operator-() const { return SplineField(geometry_, -coefficients_); }
  friend SplineField operator*(Scalar lambda, const SplineField& f) {
    return SplineField(f.geometry_, lambda * f.coefficients_);
  }
  friend SplineField operator+(const SplineField& f, const SplineField& g) {
    check_same(f, g);
    return SplineField(f.geometry_, f.coefficients_ + g.coefficients_);
  }
  friend SplineField operator-(const SplineField& f, const SplineField& g) {
    check_same(f, g);
    return SplineField(f.geometry_, f.coefficients_ - g.coefficients_);
  }

  bool same_geometry(const SplineField& other) const {
    return geometry_ == other.geometry_ || *geometry_ == *other.geometry_;
  }

 private:
  struct Stencil {
    std::array<std::array<Index, 4>, Dim> index{};
    std::array<std::array<Scalar, 4>, Dim> w{};
    std::array<std::array<Scalar, 4>, Dim> dw{};
  };

  // Fills per-axis node indices (active coordinates) and weights; inactive
  // nodes get weight 0. Returns false when no active node is touched.
  bool locate(const Point& x, Stencil& s, bool derivatives) const {
    const auto& g = *geometry_;
    for (int i = 0; i < Dim; ++i) {
      Scalar u = (x[i] - g.lo()[i]) / g.h();
      Index base;
      Scalar f;
      if constexpr (B == Boundary::periodic) {
        const Scalar n = Scalar(g.cells(i));
        u = u - n * std::floor(u / n);
        base = static_cast<Index>(std::floor(u));
        if (base >= g.cells(i)) base = g.cells(i) - 1;
        f = u - Scalar(base);
      } else {
        base = static_cast<Index>(std::floor(u));
        f = u - Scalar(base);
      }
      detail::bspline_weights(f, s.w[i].data());
      if (derivatives) detail::bspline_derivative_weights(f, s.dw[i].data());
      bool any = false;
      for (int k = 0; k < 4; ++k) {
        const Index node = base - 1 + k;
        if constexpr (B == Boundary::periodic) {
          const Index n = g.cells(i);
          s.index[i][k] = ((node % n) + n) % n;
          any = true;
        } else {
          const Index a = node - Geometry::first_active();
          if (a < 0 || a >= g.active(i)) {
            s.index[i][k] = 0;
            s.w[i][k] = 0;
            s.dw[i][k] = 0;
          } else {
            s.index[i][k] = a;
            any = true;
          }
        }
      }
      if (!any) return false;
    }
    return true;
  }

  static void check_same(const SplineField& f, const SplineField& g) {
    if (!f.same_geometry(g)) throw std::invalid_argument("SplineField: fields live on different grids");
  }

  // Applies the 1D interpolation operator (or its inverse) along every axis.
  static void apply_axes(const Geometry& g, Coefficients& data, bool inverse) {
    for (int axis = 0; axis < Dim; ++axis) {
      const MatrixX<Scalar>& m = inverse ? g.inverse(axis) : g.forward(axis);
      const Index n = g.active(axis);
      const Index inner = g.stride(axis);
      const Index outer = g.active_count() / (n * inner);
      MatrixX<Scalar> line(n, Dim);
      MatrixX<Scalar> out(n, Dim);
      for (Index o = 0; o < outer; ++o) {
        for (Index in = 0; in < inner; ++in) {
          const Index base = o * n * inner + in;
          for (Index j = 0; j < n; ++j) line.row(j) = data.col(base + j * inner).transpose();
          out.noalias() = m * line;
          for (Index j = 0; j < n; ++j) data.col(base + j * inner) = out.row(j).transpose();
        }
      }
    }
  }

  std::shared_ptr<const Geometry> geometry_;
  Coefficients coefficients_;
};

template <int Dim>
using CompactField = SplineField<double, Dim, Boundary::compact>;
template <int Dim>
using PeriodicField = SplineField<double, Dim, Boundary::periodic>;

using CompactField1d = CompactField<1>;
using CompactField2d = CompactField<2>;
using CompactField3d = CompactField<3>;
using PeriodicField1d = PeriodicField<1>;
using PeriodicField2d = PeriodicField<2>;

template <typename Scalar, int Dim, Boundary B>
std::shared_ptr<const GridGeometry<Scalar, Dim, B>> make_geometry(
    const Eigen::Matrix<Scalar, Dim, 1>& lo, const Eigen::Matrix<Scalar, Dim, 1>& hi, Scalar h) {
  return std::make_shared<const GridGeometry<Scalar, Dim, B>>(lo, hi, h);
}

/// Safety factor applied to the lattice estimate of sup ||DF||.
inline constexpr double kAlphaSafety = 1.05;

/// Lattice of pitch h / refinement covering the box (closed for compact, half-open for periodic).
template <typename Field, typename Fn>
void for_each_lattice_point(const Field& f, Index refinement, Fn&& fn) {
  using Scalar = typename Field::scalar_type;
  constexpr int Dim = Field::dimension;
  const auto& g = f.geometry();
  std::array<Index, Dim> count{};
  Index total = 1;
  for (int i = 0; i < Dim; ++i) {
    count[i] = g.cells(i) * refinement + (Field::boundary == Boundary::compact ? 1 : 0);
    total *= count[i];
  }
  const Scalar pitch = g.h() / Scalar(refinement);
  for (Index lin = 0; lin < total; ++lin) {
    typename Field::Point x;
    Index rem = lin;
    for (int i = Dim - 1; i >= 0; --i) {
      const Index k = rem % count[i];
      rem /= count[i];
      x[i] = g.lo()[i] + pitch * Scalar(k);
    }
    fn(lin, x);
  }
}

template <typename Field>
Index lattice_size(const Field& f, Index refinement) {
  Index total = 1;
  for (int i = 0; i < Field::dimension; ++i) {
    total *= f.geometry().cells(i) * refinement + (Field::boundary == Boundary::compact ? 1 : 0);
  }
  return total;
}

template <typename Field>
typename Field::Point lattice_point(const Field& f, Index refinement, Index lin) {
  using Scalar = typename Field::scalar_type;
  constexpr int Dim = Field::dimension;
  const auto& g = f.geometry();
  const Scalar pitch = g.h() / Scalar(refinement);
  typename Field::Point x;
  for (int i = Dim - 1; i >= 0; --i) {
    const Index count = g.cells(i) * refinement + (Field::boundary == Boundary::compact ? 1 : 0);
    x[i] = g.lo()[i] + pitch * Scalar(lin % count);
    lin /= count;
  }
  return x;
}

namespace detail {

// Deterministic parallel max of a per-point quantity over the lattice.
template <typename Field, typename Fn>
typename Field::scalar_type lattice_max(const Field& f, Index refinement, Fn&& fn) {
  using Scalar = typename Field::scalar_type;
  const Index total = lattice_size(f, refinement);
  const Index chunk = 1024;
  const Index chunks = (total + chunk - 1) / chunk;
  std::vector<Scalar> partial(static_cast<std::size_t>(chunks), Scalar(0));
  parallel_for(chunks, [&](Index c) {
    Scalar m = 0;
    const Index end = std::min(total, (c + 1) * chunk);
    for (Index lin = c * chunk; lin < end; ++lin) m = std::max(m, fn(lattice_point(f, refinement, lin)));
    partial[static_cast<std::size_t>(c)] = m;
  });
  Scalar m = 0;
  for (Scalar v : partial) m = std::max(m, v);
  return m;
}

}  // namespace detail

template <typename Field>
typename Field::Point vf_eval(const Field& f, const typename Field::Point& x) {
  return f(x);
}

template <typename Field>
typename Field::Jacobian vf_jacobian(const Field& f, const typename Field::Point& x) {
  return f.jacobian(x);
}

/// Over-estimate of alpha(F) = sup_x ||DF(x)||_op: spectral norms on a lattice of
/// pitch h/4 times kAlphaSafety. alpha(lambda F) = |lambda| alpha(F) for powers of two.
template <typename Field>
typename Field::scalar_type vf_alpha(const Field& f) {
  using Scalar = typename Field::scalar_type;
  if (f.is_zero()) return Scalar(0);
  const Scalar m = detail::lattice_max(f, 4, [&](const typename Field::Point& x) { return spectral_norm(f.jacobian(x)); });
  return Scalar(kAlphaSafety) * m;
}

/// Lattice estimate of sup_x |F(x)| (Euclidean).
template <typename Field>
typename Field::scalar_type vf_sup_norm(const Field& f, Index refinement = 4) {
  if (f.is_zero()) return 0;
  return detail::lattice_max(f, refinement, [&](const typename Field::Point& x) { return f(x).norm(); });
}

/// C^1 sup-seminorm sup|F| + sup||DF||_op, both on the lattice.
template <typename Field>
typename Field::scalar_type vf_cr_seminorm(const Field& f, Index refinement = 4) {
  using Scalar = typename Field::scalar_type;
  if (f.is_zero()) return Scalar(0);
  const Scalar v = detail::lattice_max(f, refinement, [&](const typename Field::Point& x) { return f(x).norm(); });
  const Scalar d = detail::lattice_max(f, refinement, [&](const typename Field::Point& x) { return spectral_norm(f.jacobian(x)); });
  return v + d;
}

/// Declared interpolation error of a field built by resampling, measured in the
/// C^1 sup-seminorm: fourth differences of the node values stand in for h^4 |F''''|
/// in the cubic-spline bounds 5/384 h^4 M4 (values) and (1/24 + sqrt(3)/216) h^3 M4
/// (derivatives), with a factor 2 margin and a rounding floor.
template <typename Field>
typename Field::scalar_type resampling_tolerance(const Field& f) {
  using Scalar = typename Field::scalar_type;
  constexpr int Dim = Field::dimension;
  const auto& g = f.geometry();
  const auto values = f.node_values();
  Scalar fourth = 0;
  for (int axis = 0; axis < Dim; ++axis) {
    const Index n = g.active(axis);
    const Index stride = g.stride(axis);
    Scalar m = 0;
    for (Index lin = 0; lin < g.active_count(); ++lin) {
      const Index j = g.unravel(lin)[static_cast<std::size_t>(axis)];
      if constexpr (Field::boundary == Boundary::compact) {
        if (j + 4 >= n) continue;
        const auto d = values.col(lin) - 4 * values.col(lin + stride) + 6 * values.col(lin + 2 * stride) -
                       4 * values.col(lin + 3 * stride) + values.col(lin + 4 * stride);
        m = std::max(m, d.norm());
      } else {
        auto at = [&](Index k) { return values.col(lin + (((j + k) % n) - j) * stride); };
        const auto d = at(0) - 4 * at(1) + 6 * at(2) - 4 * at(3) + at(4);
        m = std::max(m, d.norm());
      }
    }
    fourth += m;
  }
  const Scalar h = g.h();
  const Scalar value_c = Scalar(5) / Scalar(384);
  const Scalar deriv_c = Scalar(1) / Scalar(24) + std::sqrt(Scalar(3)) / Scalar(216);
  const Scalar scale = f.coefficients().cwiseAbs().maxCoeff();
  const Scalar floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale * (Scalar(1) + Scalar(1) / h);
  return Scalar(2) * fourth * (value_c + deriv_c / h) + floor;
}

/// Resamples x -> F(x + phi(x)) onto F's grid.
template <typename Field>
Field vf_compose_displacement(const Field& outer, const Field& phi) {
  const auto& g = outer.geometry();
  const bool shared = outer.same_geometry(phi);
  const typename Field::Coefficients phi_nodes = shared ? phi.node_values() : typename Field::Coefficients();
  typename Field::Coefficients samples(Field::dimension, g.active_count());
  if (outer.is_zero()) return Field::zero(outer.geometry_ptr());
  std::atomic<bool> failed{false};
  parallel_for(g.active_count(), [&](Index j) {
    const typename Field::Point x = g.active_node(j);
    const typename Field::Point d = shared ? typename Field::Point(phi_nodes.col(j)) : phi(x);
    const typename Field::Point y = x + d;
    if (!y.allFinite()) {
      failed = true;
      samples.col(j).setZero();
      return;
    }
    samples.col(j) = outer(y);
  });
  if (failed) throw std::domain_error("vf_compose_displacement: displaced node is not finite");
  return Field::from_samples(outer.geometry_ptr(), std::move(samples));
}

}  // namespace evolflow
