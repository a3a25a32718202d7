#include "evolflow/manifold_paths.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace evolflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Chart coordinates beyond this are treated as hitting the projection pole.
constexpr double kPoleLimit = 1e8;

double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

double wrap_angle_difference(double d) { return kTwoPi * wrap_half(d / kTwoPi); }

// Path on [knots.front(), knots.back()] through the given knot values with secant densities.
AcPath<double> secant_path(const std::vector<double>& knots, const MatrixX<double>& values, double p) {
  TimeGrid<double> grid(knots);
  MatrixX<double> dens(values.rows(), grid.cells());
  for (Index c = 0; c < grid.cells(); ++c) dens.col(c) = (values.col(c + 1) - values.col(c)) / grid.width(c);
  return AcPath<double>(values.col(0), LpSample<double>(std::move(grid), std::move(dens), p));
}

// Knots of `path`'s grid plus every knot of `extra` strictly inside the path's interval.
std::vector<double> merged_knots(const AcPath<double>& path, const std::vector<double>& extra) {
  std::vector<double> k = path.grid().knots();
  for (double t : extra) {
    if (t > path.a() && t < path.b()) k.push_back(t);
  }
  std::sort(k.begin(), k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return k;
}

std::vector<double> all_knots(const ManifoldAcPath& eta) {
  std::vector<double> k;
  for (const auto& s : eta.segments()) k.insert(k.end(), s.path.grid().knots().begin(), s.path.grid().knots().end());
  std::sort(k.begin(), k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return k;
}

std::vector<double> section_knots(const SectionTuple& tau) {
  std::vector<double> k;
  for (const auto& s : tau.tau) k.insert(k.end(), s.grid().knots().begin(), s.grid().knots().end());
  return k;
}

void check_tuple(const ManifoldAcPath& eta, const SectionTuple& tau) {
  if (static_cast<Index>(tau.tau.size()) != eta.segment_count() || tau.charts.size() != tau.tau.size()) {
    throw std::invalid_argument("SectionTuple: one coordinate path per interval required");
  }
  for (Index i = 0; i < eta.segment_count(); ++i) {
    const auto& t = tau.tau[static_cast<std::size_t>(i)];
    if (t.a() != eta.partition()[static_cast<std::size_t>(i)] || t.b() != eta.partition()[static_cast<std::size_t>(i + 1)]) {
      throw std::invalid_argument("SectionTuple: interval mismatch with the base path");
    }
    if (t.dim() != eta.manifold().dim()) throw std::invalid_argument("SectionTuple: dimension mismatch");
  }
}

// Chart coordinates of the base path at time t inside segment i.
VectorX<double> base_coordinates(const ManifoldAcPath& eta, Index i, double t) {
  return eta.segments()[static_cast<std::size_t>(i)].path(t);
}

}  // namespace

std::string to_string(ManifoldKind kind) { return kind == ManifoldKind::torus ? "torus" : "circle"; }

ManifoldKind manifold_kind_from_string(const std::string& name) {
  if (name == "torus") return ManifoldKind::torus;
  if (name == "circle") return ManifoldKind::circle;
  throw std::invalid_argument("unknown manifold '" + name + "'");
}

double wrap_half(double d) { return d - std::ceil(d - 0.5); }

double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

LocalAddition LocalAddition::torus(int dim) {
  if (dim < 1) throw std::invalid_argument("LocalAddition: torus dimension must be positive");
  return LocalAddition(ManifoldKind::torus, dim, 0.5);
}

LocalAddition LocalAddition::circle() { return LocalAddition(ManifoldKind::circle, 1, std::numbers::pi); }

std::string LocalAddition::chart_name(int chart) const {
  check_chart(chart);
  if (kind_ == ManifoldKind::torus) return "lift";
  return chart == 0 ? "north" : "south";
}

void LocalAddition::check_chart(int chart) const {
  if (chart < 0 || chart >= chart_count()) throw std::invalid_argument("LocalAddition: unknown chart id");
}

VectorX<double> LocalAddition::normalize(const VectorX<double>& p) const {
  if (p.size() != dim_) throw std::invalid_argument("LocalAddition: point dimension mismatch");
  VectorX<double> q(p.size());
  for (Index i = 0; i < p.size(); ++i) q[i] = kind_ == ManifoldKind::torus ? wrap_unit(p[i]) : wrap_angle(p[i]);
  return q;
}

bool LocalAddition::in_omega(const VectorX<double>& v) const {
  return v.allFinite() && v.cwiseAbs().maxCoeff() < radius_;
}

VectorX<double> LocalAddition::sigma(const VectorX<double>& p, const VectorX<double>& v) const {
  if (!in_omega(v)) throw std::domain_error("Sigma: tangent vector outside Omega");
  return normalize(p + v);
}

std::pair<VectorX<double>, VectorX<double>> LocalAddition::theta(const VectorX<double>& p, const VectorX<double>& v) const {
  return {normalize(p), sigma(p, v)};
}

VectorX<double> LocalAddition::theta_inv(const VectorX<double>& p, const VectorX<double>& q) const {
  if (p.size() != dim_ || q.size() != dim_) throw std::invalid_argument("theta_inv: dimension mismatch");
  VectorX<double> v(dim_);
  for (Index i = 0; i < dim_; ++i) {
    v[i] = kind_ == ManifoldKind::torus ? wrap_half(q[i] - p[i]) : wrap_angle_difference(q[i] - p[i]);
  }
  if (!in_omega(v)) throw std::domain_error("theta_inv: points too far apart for the local addition");
  return v;
}

double LocalAddition::distance(const VectorX<double>& p, const VectorX<double>& q) const {
  double m = 0;
  for (Index i = 0; i < dim_; ++i) {
    const double d = kind_ == ManifoldKind::torus ? wrap_half(q[i] - p[i]) : wrap_angle_difference(q[i] - p[i]);
    m = std::max(m, std::abs(d));
  }
  return m;
}

VectorX<double> LocalAddition::to_chart(int chart, const VectorX<double>& p) const {
  check_chart(chart);
  if (kind_ == ManifoldKind::torus) return p;
  const double theta = p[0];
  const double u = chart == 0 ? std::tan(0.5 * theta + 0.25 * std::numbers::pi) : std::tan(0.25 * std::numbers::pi - 0.5 * theta);
  if (!std::isfinite(u) || std::abs(u) > kPoleLimit) throw std::domain_error("to_chart: point is the pole of the chart");
  return VectorX<double>::Constant(1, u);
}

VectorX<double> LocalAddition::from_chart(int chart, const VectorX<double>& u) const {
  check_chart(chart);
  if (kind_ == ManifoldKind::torus) return normalize(u);
  const double a = 2.0 * std::atan(u[0]);
  const double theta = chart == 0 ? a - 0.5 * std::numbers::pi : 0.5 * std::numbers::pi - a;
  return VectorX<double>::Constant(1, wrap_angle(theta));
}

MatrixX<double> LocalAddition::chart_derivative(int chart, const VectorX<double>& p) const {
  check_chart(chart);
  if (kind_ == ManifoldKind::torus) return MatrixX<double>::Identity(dim_, dim_);
  const double u = to_chart(chart, p)[0];
  const double d = chart == 0 ? 0.5 * (1.0 + u * u) : -0.5 * (1.0 + u * u);
  return MatrixX<double>::Constant(1, 1, d);
}

int LocalAddition::preferred_chart(const VectorX<double>& p) const {
  if (kind_ == ManifoldKind::torus) return 0;
  // North misses pi/2, south misses 3pi/2: take the one whose pole is farther away.
  return std::sin(p[0]) <= 0.0 ? 0 : 1;
}

ManifoldAcPath::ManifoldAcPath(LocalAddition manifold, std::vector<double> partition, std::vector<ChartSegment> segments)
    : manifold_(std::move(manifold)), partition_(std::move(partition)), segments_(std::move(segments)) {
  if (partition_.size() < 2 || segments_.size() + 1 != partition_.size()) {
    throw std::invalid_argument("ManifoldAcPath: need one segment per partition interval");
  }
  for (std::size_t j = 0; j < segments_.size(); ++j) {
    const auto& s = segments_[j];
    if (!(partition_[j + 1] > partition_[j])) throw std::invalid_argument("ManifoldAcPath: partition must increase");
    if (s.path.a() != partition_[j] || s.path.b() != partition_[j + 1]) {
      throw std::invalid_argument("ManifoldAcPath: segment interval does not match the partition");
    }
    if (s.path.dim() != manifold_.dim()) throw std::invalid_argument("ManifoldAcPath: segment dimension mismatch");
    if (s.chart < 0 || s.chart >= manifold_.chart_count()) throw std::invalid_argument("ManifoldAcPath: unknown chart");
    if (s.path.p() != segments_.front().path.p()) throw std::invalid_argument("ManifoldAcPath: mixed exponents");
  }
  for (std::size_t j = 0; j + 1 < segments_.size(); ++j) {
    const double t = partition_[j + 1];
    const auto left = manifold_.from_chart(segments_[j].chart, segments_[j].path(t));
    const auto right = manifold_.from_chart(segments_[j + 1].chart, segments_[j + 1].path(t));
    const double gap = manifold_.distance(left, right);
    if (!(gap <= kKnotTolerance)) {
      std::ostringstream msg;
      msg << "ManifoldAcPath: segments disagree at t = " << t << " by " << gap;
      throw std::invalid_argument(msg.str());
    }
  }
}

Index ManifoldAcPath::locate(double t) const {
  if (!(t >= a() && t <= b())) throw std::out_of_range("ManifoldAcPath: time outside the path interval");
  auto it = std::upper_bound(partition_.begin(), partition_.end(), t);
  return std::clamp<Index>(static_cast<Index>(it - partition_.begin()) - 1, 0, segment_count() - 1);
}

VectorX<double> point_eval(const ManifoldAcPath& eta, double t) {
  const Index i = eta.locate(t);
  const auto& s = eta.segments()[static_cast<std::size_t>(i)];
  return eta.manifold().from_chart(s.chart, s.path(t));
}

ManifoldAcPath const_path(const LocalAddition& manifold, const VectorX<double>& q, double a, double b, double p) {
  const VectorX<double> point = manifold.normalize(q);
  const int chart = manifold.preferred_chart(point);
  const auto grid = TimeGrid<double>::uniform(a, b, 1);
  return ManifoldAcPath(manifold, {a, b}, {{chart, AcPath<double>::constant(manifold.to_chart(chart, point), grid, p)}});
}

SectionTuple zero_section(const ManifoldAcPath& eta) {
  SectionTuple out;
  for (const auto& s : eta.segments()) {
    out.tau.push_back(AcPath<double>::constant(VectorX<double>::Zero(eta.manifold().dim()), s.path.grid(), s.path.p()));
    out.charts.push_back(s.chart);
  }
  return out;
}

ManifoldAcPath chart_psi(const ManifoldAcPath& eta, const SectionTuple& tau) {
  check_tuple(eta, tau);
  const auto& m = eta.manifold();
  std::vector<ChartSegment> segments;
  for (Index i = 0; i < eta.segment_count(); ++i) {
    const auto& base = eta.segments()[static_cast<std::size_t>(i)];
    const auto& sec = tau.tau[static_cast<std::size_t>(i)];
    const int sec_chart = tau.charts[static_cast<std::size_t>(i)];
    const auto knots = merged_knots(base.path, sec.grid().knots());
    MatrixX<double> values(m.dim(), static_cast<Index>(knots.size()));
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double t = knots[k];
      const VectorX<double> u = base.path(t);
      VectorX<double> w = sec(t);
      if (m.kind() == ManifoldKind::torus) {
        if (!m.in_omega(w)) {
          std::ostringstream msg;
          msg << "chart_psi: section leaves Omega at t = " << t;
          throw std::domain_error(msg.str());
        }
        values.col(static_cast<Index>(k)) = u + w;
        continue;
      }
      const VectorX<double> point = m.from_chart(base.chart, u);
      const VectorX<double> v = m.chart_derivative(sec_chart, point).inverse() * w;
      if (!m.in_omega(v)) {
        std::ostringstream msg;
        msg << "chart_psi: section leaves Omega at t = " << t;
        throw std::domain_error(msg.str());
      }
      values.col(static_cast<Index>(k)) = m.to_chart(base.chart, m.sigma(point, v));
    }
    segments.push_back({base.chart, secant_path(knots, values, base.path.p())});
  }
  return ManifoldAcPath(m, eta.partition(), std::move(segments));
}

SectionTuple chart_psi_inv(const ManifoldAcPath& eta, const ManifoldAcPath& gamma) {
  const auto& m = eta.manifold();
  if (!(gamma.manifold() == m)) throw std::invalid_argument("chart_psi_inv: paths live on different manifolds");
  if (gamma.a() != eta.a() || gamma.b() != eta.b()) throw std::invalid_argument("chart_psi_inv: interval mismatch");
  const auto gamma_knots = all_knots(gamma);
  SectionTuple out;
  for (Index i = 0; i < eta.segment_count(); ++i) {
    const auto& base = eta.segments()[static_cast<std::size_t>(i)];
    const auto knots = merged_knots(base.path, gamma_knots);
    MatrixX<double> values(m.dim(), static_cast<Index>(knots.size()));
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double t = knots[k];
      const VectorX<double> u = base.path(t);
      // Evaluate gamma from the side of the knot that lies inside interval i.
      const Index gi = std::clamp<Index>(gamma.locate(t), 0, gamma.segment_count() - 1);
      Index use = gi;
      if (k + 1 == knots.size() && gi > 0 && gamma.partition()[static_cast<std::size_t>(gi)] == t) use = gi - 1;
      const auto& gs = gamma.segments()[static_cast<std::size_t>(use)];
      VectorX<double> v;
      if (m.kind() == ManifoldKind::torus) {
        const VectorX<double> q = gs.path(t);
        v.resize(m.dim());
        for (Index d = 0; d < m.dim(); ++d) v[d] = wrap_half(q[d] - u[d]);
        if (!m.in_omega(v)) {
          std::ostringstream msg;
          msg << "chart_psi_inv: path leaves the chart domain at t = " << t;
          throw std::domain_error(msg.str());
        }
        values.col(static_cast<Index>(k)) = v;
        continue;
      }
      const VectorX<double> p = m.from_chart(base.chart, u);
      const VectorX<double> q = m.from_chart(gs.chart, gs.path(t));
      try {
        v = m.theta_inv(p, q);
      } catch (const std::domain_error&) {
        std::ostringstream msg;
        msg << "chart_psi_inv: path leaves the chart domain at t = " << t;
        throw std::domain_error(msg.str());
      }
      values.col(static_cast<Index>(k)) = m.chart_derivative(base.chart, p) * v;
    }
    out.tau.push_back(secant_path(knots, values, base.path.p()));
    out.charts.push_back(base.chart);
  }
  return out;
}

SectionTuple transition(const ManifoldAcPath& xi, const ManifoldAcPath& eta, const SectionTuple& sigma) {
  return chart_psi_inv(xi, chart_psi(eta, sigma));
}

VectorX<double> tangent_transition(const LocalAddition& manifold, int from_chart, int to_chart, const VectorX<double>& u,
                                   const VectorX<double>& w) {
  const VectorX<double> p = manifold.from_chart(from_chart, u);
  return manifold.chart_derivative(to_chart, p) * manifold.chart_derivative(from_chart, p).inverse() * w;
}

SectionTuple section_embed(const ManifoldAcPath& eta, const AcPath<double>& sigma, std::vector<int> charts) {
  const auto& m = eta.manifold();
  if (sigma.a() != eta.a() || sigma.b() != eta.b()) throw std::invalid_argument("section_embed: interval mismatch");
  if (sigma.dim() != m.dim()) throw std::invalid_argument("section_embed: dimension mismatch");
  if (charts.empty()) {
    for (const auto& s : eta.segments()) charts.push_back(s.chart);
  }
  if (static_cast<Index>(charts.size()) != eta.segment_count()) throw std::invalid_argument("section_embed: one chart per interval");
  SectionTuple out;
  out.charts = charts;
  for (Index i = 0; i < eta.segment_count(); ++i) {
    const auto& base = eta.segments()[static_cast<std::size_t>(i)];
    const int chart = charts[static_cast<std::size_t>(i)];
    if (m.kind() == ManifoldKind::torus) {
      // Single chart with identity derivative: restrict sigma to the interval.
      auto knots = merged_knots(base.path, sigma.grid().knots());
      MatrixX<double> values(m.dim(), static_cast<Index>(knots.size()));
      for (std::size_t k = 0; k < knots.size(); ++k) values.col(static_cast<Index>(k)) = sigma(knots[k]);
      out.tau.push_back(secant_path(knots, values, sigma.p()));
      continue;
    }
    auto knots = merged_knots(base.path, sigma.grid().knots());
    MatrixX<double> values(m.dim(), static_cast<Index>(knots.size()));
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double t = knots[k];
      const VectorX<double> p = m.from_chart(base.chart, base_coordinates(eta, i, t));
      values.col(static_cast<Index>(k)) = m.chart_derivative(chart, p) * sigma(t);
    }
    out.tau.push_back(secant_path(knots, values, sigma.p()));
  }
  return out;
}

double section_compatibility_defect(const ManifoldAcPath& eta, const SectionTuple& tau) {
  check_tuple(eta, tau);
  const auto& m = eta.manifold();
  double worst = 0;
  for (Index i = 0; i + 1 < eta.segment_count(); ++i) {
    const double t = eta.partition()[static_cast<std::size_t>(i + 1)];
    const auto& left = tau.tau[static_cast<std::size_t>(i)];
    const auto& right = tau.tau[static_cast<std::size_t>(i + 1)];
    const VectorX<double> u_right = m.to_chart(tau.charts[static_cast<std::size_t>(i + 1)], point_eval(eta, t));
    const VectorX<double> carried = tangent_transition(m, tau.charts[static_cast<std::size_t>(i + 1)],
                                                       tau.charts[static_cast<std::size_t>(i)], u_right, right(t));
    worst = std::max(worst, (left(t) - carried).cwiseAbs().maxCoeff());
  }
  return worst;
}

AcPath<double> section_glue(const ManifoldAcPath& eta, const SectionTuple& tau, double tol) {
  const double defect = section_compatibility_defect(eta, tau);
  if (!(defect <= tol)) {
    std::ostringstream msg;
    msg << "section_glue: knot compatibility violated by " << defect;
    throw std::invalid_argument(msg.str());
  }
  const auto& m = eta.manifold();
  std::vector<double> knots;
  std::vector<VectorX<double>> values;
  for (Index i = 0; i < eta.segment_count(); ++i) {
    const auto& base = eta.segments()[static_cast<std::size_t>(i)];
    const auto& sec = tau.tau[static_cast<std::size_t>(i)];
    const int chart = tau.charts[static_cast<std::size_t>(i)];
    const auto nodes = sec.knot_values();
    const auto& g = sec.grid();
    for (Index k = (i == 0 ? 0 : 1); k < g.size(); ++k) {
      const double t = g.knot(k);
      const VectorX<double> p = m.from_chart(base.chart, base.path(t));
      knots.push_back(t);
      values.push_back(m.chart_derivative(chart, p).inverse() * nodes.col(k));
    }
  }
  MatrixX<double> v(m.dim(), static_cast<Index>(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) v.col(static_cast<Index>(k)) = values[k];
  return secant_path(knots, v, eta.p());
}

std::pair<ManifoldAcPath, ManifoldAcPath> split_product(const ManifoldAcPath& eta, int first_dim) {
  const auto& m = eta.manifold();
  if (m.kind() != ManifoldKind::torus) throw std::invalid_argument("split_product: torus paths only");
  if (first_dim < 1 || first_dim >= m.dim()) throw std::invalid_argument("split_product: bad split dimension");
  const int second_dim = m.dim() - first_dim;
  std::vector<ChartSegment> s1, s2;
  for (const auto& s : eta.segments()) {
    const auto& d = s.path.density();
    s1.push_back({0, AcPath<double>(s.path.start().head(first_dim),
                                    LpSample<double>(d.grid(), d.values().topRows(first_dim), d.p(), d.mode()))});
    s2.push_back({0, AcPath<double>(s.path.start().tail(second_dim),
                                    LpSample<double>(d.grid(), d.values().bottomRows(second_dim), d.p(), d.mode()))});
  }
  return {ManifoldAcPath(LocalAddition::torus(first_dim), eta.partition(), std::move(s1)),
          ManifoldAcPath(LocalAddition::torus(second_dim), eta.partition(), std::move(s2))};
}

ManifoldAcPath combine_product(const ManifoldAcPath& eta1, const ManifoldAcPath& eta2) {
  if (eta1.manifold().kind() != ManifoldKind::torus || eta2.manifold().kind() != ManifoldKind::torus) {
    throw std::invalid_argument("combine_product: torus paths only");
  }
  if (eta1.partition() != eta2.partition()) throw std::invalid_argument("combine_product: partitions differ");
  const int d1 = eta1.manifold().dim();
  const int d2 = eta2.manifold().dim();
  std::vector<ChartSegment> out;
  for (Index i = 0; i < eta1.segment_count(); ++i) {
    const auto& a = eta1.segments()[static_cast<std::size_t>(i)].path;
    const auto& b = eta2.segments()[static_cast<std::size_t>(i)].path;
    const auto grid = common_refinement(a.grid(), b.grid());
    const auto da = a.density().refined(grid);
    const auto db = b.density().refined(grid);
    VectorX<double> start(d1 + d2);
    start << a.start(), b.start();
    MatrixX<double> dens(d1 + d2, da.values().cols());
    dens << da.values(), db.values();
    out.push_back({0, AcPath<double>(start, LpSample<double>(grid, std::move(dens), a.p(), da.mode()))});
  }
  return ManifoldAcPath(LocalAddition::torus(d1 + d2), eta1.partition(), std::move(out));
}

double manifold_path_distance(const ManifoldAcPath& eta1, const ManifoldAcPath& eta2) {
  if (!(eta1.manifold() == eta2.manifold())) throw std::invalid_argument("manifold_path_distance: different manifolds");
  auto knots = all_knots(eta1);
  const auto k2 = all_knots(eta2);
  knots.insert(knots.end(), k2.begin(), k2.end());
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  double worst = 0;
  for (double t : knots) worst = std::max(worst, eta1.manifold().distance(point_eval(eta1, t), point_eval(eta2, t)));
  return worst;
}

}  // namespace evolflow
