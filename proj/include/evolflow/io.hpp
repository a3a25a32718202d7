#pragma once

// Serialization: JSON for step functions, AC paths and manifests; a small binary
// format (CFLD) for spline fields.
//
// CFLD layout, little-endian:
//   char[4] "CFLD" | int32 n | int32 nodes[n] | f64 lo[n] | f64 hi[n] | f64 h |
//   f64 coefficients, row-major over the full node grid, n components per node.
// Nodes outside the active range (the two-node margin of compact fields) are zero.
// A JSON sidecar "<file>.json" records the boundary model and the smoothness order.

#include "evolflow/evolution.hpp"
#include "evolflow/manifold_paths.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

namespace evolflow {

using json = nlohmann::json;

/// Raised for malformed or inconsistent input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json exponent_to_json(double p);
double exponent_from_json(const json& j);

json to_json(const LpSample<double>& f);
LpSample<double> lp_sample_from_json(const json& j);
json to_json(const AcPath<double>& eta);
AcPath<double> ac_path_from_json(const json& j);
json to_json(const ManifoldAcPath& eta);
ManifoldAcPath manifold_path_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

/// Smoothness order recorded in sidecars: the fields are C^2 cubic splines,
/// measured in the C^1 seminorm.
inline constexpr int kFieldOrder = 1;

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("CFLD: truncated file");
  return v;
}

}  // namespace detail

template <typename Field>
void write_field(const std::filesystem::path& path, const Field& f) {
  constexpr int Dim = Field::dimension;
  const auto& g = f.geometry();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("CFLD", 4);
  detail::put<std::int32_t>(os, Dim);
  for (int i = 0; i < Dim; ++i) detail::put<std::int32_t>(os, static_cast<std::int32_t>(g.file_nodes(i)));
  for (int i = 0; i < Dim; ++i) detail::put<double>(os, g.lo()[i]);
  for (int i = 0; i < Dim; ++i) detail::put<double>(os, g.hi()[i]);
  detail::put<double>(os, g.h());
  Index total = 1;
  for (int i = 0; i < Dim; ++i) total *= g.file_nodes(i);
  const Index first = Field::Geometry::first_active();
  for (Index lin = 0; lin < total; ++lin) {
    Index rem = lin;
    Index active = 0;
    bool inside = true;
    std::array<Index, Dim> idx{};
    for (int i = Dim - 1; i >= 0; --i) {
      idx[i] = rem % g.file_nodes(i);
      rem /= g.file_nodes(i);
    }
    for (int i = 0; i < Dim; ++i) {
      const Index a = idx[i] - first;
      if (a < 0 || a >= g.active(i)) inside = false;
      active += a * g.stride(i);
    }
    for (int d = 0; d < Dim; ++d) detail::put<double>(os, inside ? f.coefficients()(d, active) : 0.0);
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
  json side = {{"format", "CFLD"},
               {"boundary", Field::boundary == Boundary::compact ? "compact" : "periodic"},
               {"r", kFieldOrder},
               {"dimension", Dim}};
  write_json_file(path.string() + ".json", side);
}

template <typename Field>
Field read_field(const std::filesystem::path& path) {
  constexpr int Dim = Field::dimension;
  using Geometry = typename Field::Geometry;
  const std::filesystem::path sidecar = path.string() + ".json";
  if (std::filesystem::exists(sidecar)) {
    const json side = read_json_file(sidecar);
    const std::string want = Field::boundary == Boundary::compact ? "compact" : "periodic";
    if (side.value("boundary", want) != want) throw FormatError(path.string() + ": boundary model is not " + want);
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "CFLD") throw FormatError(path.string() + ": bad magic");
  const auto n = detail::get<std::int32_t>(is);
  if (n != Dim) throw FormatError(path.string() + ": dimension " + std::to_string(n) + " does not match");
  std::array<Index, Dim> nodes{};
  typename Geometry::Point lo, hi;
  for (int i = 0; i < Dim; ++i) nodes[i] = detail::get<std::int32_t>(is);
  for (int i = 0; i < Dim; ++i) lo[i] = detail::get<double>(is);
  for (int i = 0; i < Dim; ++i) hi[i] = detail::get<double>(is);
  const double h = detail::get<double>(is);
  std::shared_ptr<const Geometry> g;
  try {
    g = std::make_shared<const Geometry>(lo, hi, h);
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Index total = 1;
  for (int i = 0; i < Dim; ++i) {
    if (nodes[i] != g->file_nodes(i)) throw FormatError(path.string() + ": node count does not match the box");
    total *= nodes[i];
  }
  typename Field::Coefficients coeff = Field::Coefficients::Zero(Dim, g->active_count());
  const Index first = Geometry::first_active();
  for (Index lin = 0; lin < total; ++lin) {
    Index rem = lin;
    std::array<Index, Dim> idx{};
    for (int i = Dim - 1; i >= 0; --i) {
      idx[i] = rem % nodes[i];
      rem /= nodes[i];
    }
    Index active = 0;
    bool inside = true;
    for (int i = 0; i < Dim; ++i) {
      const Index a = idx[i] - first;
      if (a < 0 || a >= g->active(i)) inside = false;
      active += a * g->stride(i);
    }
    for (int d = 0; d < Dim; ++d) {
      const double v = detail::get<double>(is);
      if (inside) {
        coeff(d, active) = v;
      } else if (v != 0.0) {
        throw FormatError(path.string() + ": nonzero coefficient outside the support box");
      }
    }
  }
  try {
    return Field(std::move(g), std::move(coeff));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Reads a field and rebinds it to an existing geometry when the grids agree.
template <typename Field>
Field read_field_shared(const std::filesystem::path& path, std::shared_ptr<const typename Field::Geometry>& shared) {
  Field f = read_field<Field>(path);
  if (!shared) {
    shared = f.geometry_ptr();
    return f;
  }
  if (f.geometry() != *shared) throw FormatError(path.string() + ": grid differs from the other fields");
  return Field(shared, f.coefficients());
}

/// Velocity manifest {p, knots[], field_files[]}; field files are relative to the manifest.
template <typename Field>
void write_velocity(const std::filesystem::path& manifest, const TimeVelocity<Field>& gamma) {
  const auto dir = manifest.parent_path();
  const std::string stem = manifest.stem().string();
  json files = json::array();
  for (Index c = 0; c < gamma.cells(); ++c) {
    const std::string name = stem + "_cell" + std::to_string(c) + ".cfld";
    write_field(dir / name, gamma.field(c));
    files.push_back(name);
  }
  json j = {{"p", exponent_to_json(gamma.p())}, {"knots", gamma.grid().knots()}, {"field_files", files}};
  write_json_file(manifest, j);
}

template <typename Field>
TimeVelocity<Field> read_velocity(const std::filesystem::path& manifest) {
  const json j = read_json_file(manifest);
  for (const char* key : {"p", "knots", "field_files"}) {
    if (!j.contains(key)) throw FormatError(manifest.string() + ": missing key '" + key + "'");
  }
  std::vector<double> knots;
  std::vector<std::string> files;
  try {
    knots = j.at("knots").get<std::vector<double>>();
    files = j.at("field_files").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (files.size() + 1 != knots.size()) throw FormatError(manifest.string() + ": need one field file per cell");
  std::shared_ptr<const typename Field::Geometry> shared;
  std::vector<Field> fields;
  for (const auto& name : files) fields.push_back(read_field_shared<Field>(manifest.parent_path() / name, shared));
  try {
    return TimeVelocity<Field>(TimeGrid<double>(knots), std::move(fields), exponent_from_json(j.at("p")));
  } catch (const std::invalid_argument& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
}

/// Group path manifest {p, times[], density_files[]}.
template <typename Field>
json write_group_path(const std::filesystem::path& dir, const std::string& stem, const GroupPath<Field>& eta) {
  json files = json::array();
  for (Index c = 0; c < eta.cells(); ++c) {
    const std::string name = stem + "_density" + std::to_string(c) + ".cfld";
    write_field(dir / name, eta.density(c));
    files.push_back(name);
  }
  return json{{"p", exponent_to_json(eta.p())}, {"times", eta.times()}, {"density_files", files}};
}

template <typename Field>
GroupPath<Field> read_group_path(const std::filesystem::path& dir, const json& j) {
  std::vector<double> times;
  std::vector<std::string> files;
  try {
    times = j.at("times").get<std::vector<double>>();
    files = j.at("density_files").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("group path manifest: ") + e.what());
  }
  if (files.size() + 1 != times.size()) throw FormatError("group path manifest: need one density per cell");
  std::shared_ptr<const typename Field::Geometry> shared;
  std::vector<Field> dens;
  for (const auto& name : files) dens.push_back(read_field_shared<Field>(dir / name, shared));
  try {
    return GroupPath<Field>(TimeGrid<double>(times), dens, exponent_from_json(j.at("p")));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("group path manifest: ") + e.what());
  }
}

/// Evolution manifest {n, segments[], residual, tolerance, iterations[], path}.
template <typename Field>
void write_evolution(const std::filesystem::path& manifest, const EvolutionResult<Field>& r) {
  json segs = json::array();
  json iterations = json::array();
  for (const auto& s : r.segments) {
    segs.push_back({{"k", s.k},
                    {"contraction_bound", s.contraction_bound},
                    {"iterations", s.iterations},
                    {"picard_change", s.picard_change},
                    {"residual", s.residual}});
    iterations.push_back(s.iterations);
  }
  json j = {{"n", r.n},
            {"segments", segs},
            {"residual", r.residual},
            {"tolerance", r.tolerance},
            {"contraction_l1", r.contraction_l1},
            {"iterations", iterations},
            {"path", write_group_path(manifest.parent_path(), manifest.stem().string(), r.path)}};
  write_json_file(manifest, j);
}

template <typename Field>
EvolutionResult<Field> read_evolution(const std::filesystem::path& manifest) {
  const json j = read_json_file(manifest);
  EvolutionResult<Field> r;
  try {
    r.n = j.at("n").get<Index>();
    r.residual = j.at("residual").get<double>();
    r.tolerance = j.at("tolerance").get<double>();
    r.contraction_l1 = j.value("contraction_l1", 0.0);
    for (const auto& s : j.at("segments")) {
      r.segments.push_back({s.at("k").get<Index>(), s.at("contraction_bound").get<double>(), s.at("iterations").get<int>(),
                            s.at("picard_change").get<double>(), s.at("residual").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  r.path = read_group_path<Field>(manifest.parent_path(), j.at("path"));
  return r;
}

}  // namespace evolflow
