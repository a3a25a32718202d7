#pragma once

// AC paths on manifolds with a local addition, for the flat torus T^d and the
// circle S^1.
//
// Torus: points live in [0,1)^d, there is one chart (the lift to R^d, where
// coordinate paths may leave the unit cube), Sigma(p, v) = p + v mod 1 and
// Omega = {|v|_inf < 1/2}.
// Circle: points are angles in [0, 2pi), Sigma(theta, v) = theta + v mod 2pi with
// Omega = {|v| < pi}; coordinate charts are the two stereographic projections
//   north: u = tan(theta/2 + pi/4)   (misses theta = pi/2)
//   south: v = tan(pi/4 - theta/2)   (misses theta = -pi/2), v = 1/u on the overlap.
// Tangent vectors are stored in chart coordinates (for the circle du or dv), so
// sections pick up the chart derivative when they change charts.
//
// The general atlas construction for compact manifolds (balls, gluing maps,
// partitions of unity) is replaced here by these two concrete manifolds.

#include "evolflow/ac_path.hpp"
#include "evolflow/evolution.hpp"

#include <string>
#include <vector>

namespace evolflow {

enum class ManifoldKind { torus, circle };

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string& name);

/// Wrap a torus difference to (-1/2, 1/2]; 1/2 itself stays +1/2.
double wrap_half(double d);
/// Representative in [0, 1).
double wrap_unit(double x);

class LocalAddition {
 public:
  static LocalAddition torus(int dim);
  static LocalAddition circle();

  ManifoldKind kind() const { return kind_; }
  int dim() const { return dim_; }
  /// Radius of Omega in the fibre norm (sup norm for the torus).
  double radius() const { return radius_; }
  int chart_count() const { return kind_ == ManifoldKind::torus ? 1 : 2; }
  std::string chart_name(int chart) const;

  /// Canonical representative of a point.
  VectorX<double> normalize(const VectorX<double>& p) const;
  bool in_omega(const VectorX<double>& v) const;
  /// Sigma(p, v), normalized.
  VectorX<double> sigma(const VectorX<double>& p, const VectorX<double>& v) const;
  /// theta(p, v) = (p, Sigma(p, v)).
  std::pair<VectorX<double>, VectorX<double>> theta(const VectorX<double>& p, const VectorX<double>& v) const;
  /// The v in Omega with Sigma(p, v) = q; throws domain_error when q is too far from p.
  VectorX<double> theta_inv(const VectorX<double>& p, const VectorX<double>& q) const;
  /// Distance in the fibre norm between points (wrapped).
  double distance(const VectorX<double>& p, const VectorX<double>& q) const;

  /// Chart coordinates of a point, and back.
  VectorX<double> to_chart(int chart, const VectorX<double>& p) const;
  VectorX<double> from_chart(int chart, const VectorX<double>& u) const;
  /// d(chart)/d(intrinsic) at the point p (identity on the torus).
  MatrixX<double> chart_derivative(int chart, const VectorX<double>& p) const;
  /// Chart with the best conditioning at p.
  int preferred_chart(const VectorX<double>& p) const;

  bool operator==(const LocalAddition& o) const { return kind_ == o.kind_ && dim_ == o.dim_; }

 private:
  LocalAddition(ManifoldKind kind, int dim, double radius) : kind_(kind), dim_(dim), radius_(radius) {}
  void check_chart(int chart) const;

  ManifoldKind kind_;
  int dim_;
  double radius_;
};

struct ChartSegment {
  int chart = 0;
  /// Coordinate path on [t_{j-1}, t_j].
  AcPath<double> path;
};

/// AC path on a manifold: a partition and one chart-coordinate AC path per interval.
class ManifoldAcPath {
 public:
  ManifoldAcPath(LocalAddition manifold, std::vector<double> partition, std::vector<ChartSegment> segments);

  const LocalAddition& manifold() const { return manifold_; }
  const std::vector<double>& partition() const { return partition_; }
  const std::vector<ChartSegment>& segments() const { return segments_; }
  Index segment_count() const { return static_cast<Index>(segments_.size()); }
  double a() const { return partition_.front(); }
  double b() const { return partition_.back(); }
  double p() const { return segments_.front().path.p(); }
  /// Interval containing t (left-closed, the last one closed).
  Index locate(double t) const;

 private:
  LocalAddition manifold_;
  std::vector<double> partition_;
  std::vector<ChartSegment> segments_;
};

/// Tolerance for matching points at partition knots.
inline constexpr double kKnotTolerance = 1e-10;

VectorX<double> point_eval(const ManifoldAcPath& eta, double t);
ManifoldAcPath const_path(const LocalAddition& manifold, const VectorX<double>& q, double a = 0.0, double b = 1.0,
                          double p = 1.0);

/// Section of eta^*TN in the charts of its base path: tau[i] lives on interval i in chart i.
struct SectionTuple {
  std::vector<AcPath<double>> tau;
  std::vector<int> charts;
};

/// Zero section over eta.
SectionTuple zero_section(const ManifoldAcPath& eta);

/// Psi_eta(tau) = Sigma o tau, exact at knots with secant densities in between.
ManifoldAcPath chart_psi(const ManifoldAcPath& eta, const SectionTuple& tau);
/// Psi_eta^{-1}(gamma) = theta^{-1} o (eta, gamma).
SectionTuple chart_psi_inv(const ManifoldAcPath& eta, const ManifoldAcPath& gamma);
/// Lambda_{xi,eta} = Psi_xi^{-1} o Psi_eta.
SectionTuple transition(const ManifoldAcPath& xi, const ManifoldAcPath& eta, const SectionTuple& sigma);

/// Per-interval chart coordinates of a section given in intrinsic tangent coordinates
/// (angle rate on the circle). `charts` defaults to the base path's charts.
SectionTuple section_embed(const ManifoldAcPath& eta, const AcPath<double>& sigma, std::vector<int> charts = {});
/// Inverse of section_embed; throws invalid_argument when two intervals disagree at a
/// shared knot by more than `tol`.
AcPath<double> section_glue(const ManifoldAcPath& eta, const SectionTuple& tau, double tol = kKnotTolerance);
/// Largest knot-compatibility defect of a tuple.
double section_compatibility_defect(const ManifoldAcPath& eta, const SectionTuple& tau);

/// Chart-coordinate tangent vector w at chart coordinate u re-expressed in another chart.
VectorX<double> tangent_transition(const LocalAddition& manifold, int from_chart, int to_chart,
                                   const VectorX<double>& u, const VectorX<double>& w);

/// T^{d1+d2} = T^{d1} x T^{d2}: split a torus path into component paths and back.
std::pair<ManifoldAcPath, ManifoldAcPath> split_product(const ManifoldAcPath& eta, int first_dim);
ManifoldAcPath combine_product(const ManifoldAcPath& eta1, const ManifoldAcPath& eta2);

/// Largest point mismatch between two manifold paths on the union of their knots.
double manifold_path_distance(const ManifoldAcPath& eta1, const ManifoldAcPath& eta2);

/// Evolution on the torus: the same Picard and subdivision machinery with periodic fields.
template <int Dim>
EvolutionResult<PeriodicField<Dim>> evolve_torus(const TimeVelocity<PeriodicField<Dim>>& gamma,
                                                 const SolverOptions& options = {}) {
  const auto& g = gamma.geometry();
  for (int i = 0; i < Dim; ++i) {
    if (g.lo()[i] != 0.0 || g.hi()[i] != 1.0) throw std::invalid_argument("evolve_torus: fields must live on [0,1)^d");
  }
  return evolve(gamma, options);
}

/// (id + eta(t))(x) mod 1.
template <int Dim>
Eigen::Matrix<double, Dim, 1> torus_flow_point(const EvolutionResult<PeriodicField<Dim>>& result, double t,
                                               const Eigen::Matrix<double, Dim, 1>& x) {
  Eigen::Matrix<double, Dim, 1> y = flow_point(result, t, x);
  for (int i = 0; i < Dim; ++i) y[i] = wrap_unit(y[i]);
  return y;
}

}  // namespace evolflow
