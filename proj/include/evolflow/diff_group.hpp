#pragma once

// Diff^r_K(R^n) in its global chart: an element is a displacement phi standing
// for the diffeomorphism id + phi, and the group law reads
//   phi * psi = psi + phi o (id + psi),
// i.e. (id + phi) o (id + psi). Every composition is resampled onto the grid
// right away.

#include "evolflow/vector_field.hpp"

#include <sstream>
#include <string>

namespace evolflow {

struct ChartDiagnostic {
  bool ok = false;
  double alpha = 0;
  /// min det(I + D phi) over the lattice.
  double min_det = 1;
  /// Lower bound for det(I + D phi) on every lattice cell (corner minimum minus spread).
  double certified_det = 1;
};

/// Default lower bound on det(I + D phi) for the determinant certificate.
inline constexpr double kMinDeterminant = 1e-3;

/// Membership certificate for the chart domain V_K: alpha(phi) < 1, or else a
/// positive determinant of I + D phi certified cell by cell on the lattice. For a
/// compactly supported phi a positive Jacobian determinant everywhere already makes
/// id + phi a proper local diffeomorphism of R^n, hence injective.
template <typename Field>
ChartDiagnostic in_chart_check(const Field& phi, double min_det = kMinDeterminant) {
  using Scalar = typename Field::scalar_type;
  constexpr int Dim = Field::dimension;
  ChartDiagnostic d;
  d.alpha = static_cast<double>(vf_alpha(phi));
  if (phi.is_zero()) {
    d.ok = true;
    return d;
  }
  const Index refinement = 4;
  const Index total = lattice_size(phi, refinement);
  std::vector<Scalar> dets(static_cast<std::size_t>(total));
  parallel_for(total, [&](Index lin) {
    const auto x = lattice_point(phi, refinement, lin);
    const typename Field::Jacobian m = Field::Jacobian::Identity() + phi.jacobian(x);
    dets[static_cast<std::size_t>(lin)] = m.determinant();
  });
  Scalar lowest = dets.front();
  for (Scalar v : dets) lowest = std::min(lowest, v);
  d.min_det = static_cast<double>(lowest);

  // Per lattice cell: min over corners minus (max - min) over corners bounds det from below.
  std::array<Index, Dim> count{};
  for (int i = 0; i < Dim; ++i) {
    count[i] = phi.geometry().cells(i) * refinement + (Field::boundary == Boundary::compact ? 1 : 0);
  }
  Scalar certified = std::numeric_limits<Scalar>::max();
  for (Index lin = 0; lin < total; ++lin) {
    std::array<Index, Dim> idx{};
    Index rem = lin;
    bool corner_ok = true;
    for (int i = Dim - 1; i >= 0; --i) {
      idx[i] = rem % count[i];
      rem /= count[i];
      if (Field::boundary == Boundary::compact && idx[i] + 1 >= count[i]) corner_ok = false;
    }
    if (!corner_ok) continue;
    Scalar lo = std::numeric_limits<Scalar>::max();
    Scalar hi = std::numeric_limits<Scalar>::lowest();
    for (int corner = 0; corner < (1 << Dim); ++corner) {
      Index other = 0;
      for (int i = 0; i < Dim; ++i) {
        Index k = idx[i] + ((corner >> i) & 1);
        if (Field::boundary == Boundary::periodic) k %= count[i];
        other = other * count[i] + k;
      }
      const Scalar v = dets[static_cast<std::size_t>(other)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    certified = std::min(certified, lo - (hi - lo));
  }
  d.certified_det = static_cast<double>(certified);
  d.ok = d.alpha < 1.0 || d.certified_det >= min_det;
  return d;
}

/// Element of the chart V_K with its cached alpha.
template <typename Field>
class GroupElement {
 public:
  using Scalar = typename Field::scalar_type;

  explicit GroupElement(Field displacement) : displacement_(std::move(displacement)) {
    const auto diag = in_chart_check(displacement_);
    alpha_ = diag.alpha;
    if (!diag.ok) {
      std::ostringstream msg;
      msg << "GroupElement: displacement outside the chart domain (alpha = " << diag.alpha
          << ", certified det = " << diag.certified_det << ")";
      throw std::domain_error(msg.str());
    }
  }

  static GroupElement neutral(std::shared_ptr<const typename Field::Geometry> geometry) {
    return GroupElement(Field::zero(std::move(geometry)));
  }

  const Field& displacement() const { return displacement_; }
  Scalar alpha() const { return alpha_; }

  /// (id + phi)(x).
  typename Field::Point apply(const typename Field::Point& x) const { return x + displacement_(x); }

 private:
  Field displacement_;
  Scalar alpha_ = 0;
};

/// Right translation derivative: varphi -> varphi o (id + psi). Linear in varphi.
template <typename Field>
Field d_rho(const Field& psi, const Field& varphi) {
  return vf_compose_displacement(varphi, psi);
}

/// Raw group law on displacements, without the membership check.
template <typename Field>
Field star_displacement(const Field& phi, const Field& psi) {
  if (psi.is_zero()) return vf_compose_displacement(phi, psi);
  if (phi.is_zero()) return psi;
  return psi + vf_compose_displacement(phi, psi);
}

template <typename Field>
GroupElement<Field> star(const GroupElement<Field>& phi, const GroupElement<Field>& psi) {
  return GroupElement<Field>(star_displacement(phi.displacement(), psi.displacement()));
}

struct InverseOptions {
  double tol = 1e-10;
  int max_iter = 500;
};

struct InverseDiagnostic {
  int iterations = 0;
  double last_change = 0;
};

/// Fixed point of psi = -phi o (id + psi), iterated from psi_0 = -phi until the
/// largest change of a node value drops below tol. Requires alpha(phi) < 1.
template <typename Field>
GroupElement<Field> inverse(const GroupElement<Field>& phi, const InverseOptions& options = {},
                            InverseDiagnostic* diagnostic = nullptr) {
  if (!(phi.alpha() < 1)) throw std::domain_error("inverse: needs alpha(phi) < 1");
  const Field& f = phi.displacement();
  if (f.is_zero()) return phi;
  Field psi = -f;
  auto nodes = psi.node_values();
  double change = 0;
  for (int it = 1; it <= options.max_iter; ++it) {
    Field next = -vf_compose_displacement(f, psi);
    auto next_nodes = next.node_values();
    change = static_cast<double>((next_nodes - nodes).cwiseAbs().maxCoeff());
    psi = std::move(next);
    nodes = std::move(next_nodes);
    if (change < options.tol) {
      if (diagnostic) *diagnostic = {it, change};
      return GroupElement<Field>(std::move(psi));
    }
  }
  std::ostringstream msg;
  msg << "inverse: no convergence after " << options.max_iter << " iterations (last change " << change << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace evolflow
