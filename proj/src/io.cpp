#include "evolflow/io.hpp"

#include <cmath>
#include <limits>

namespace evolflow {

json exponent_to_json(double p) {
  if (std::isinf(p)) return "inf";
  return p;
}

double exponent_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw FormatError("exponent must be a number or \"inf\"");
  }
  if (!j.is_number()) throw FormatError("exponent must be a number or \"inf\"");
  const double p = j.get<double>();
  if (!(p >= 1.0)) throw FormatError("exponent must satisfy p >= 1");
  return p;
}

namespace {

json matrix_columns(const MatrixX<double>& m) {
  json cols = json::array();
  for (Index c = 0; c < m.cols(); ++c) {
    json col = json::array();
    for (Index r = 0; r < m.rows(); ++r) col.push_back(m(r, c));
    cols.push_back(std::move(col));
  }
  return cols;
}

MatrixX<double> matrix_from_columns(const json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("expected a non-empty array of columns");
  const auto rows = j.front().size();
  MatrixX<double> m(static_cast<Index>(rows), static_cast<Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    if (!j[c].is_array() || j[c].size() != rows) throw FormatError("ragged value columns");
    for (std::size_t r = 0; r < rows; ++r) m(static_cast<Index>(r), static_cast<Index>(c)) = j[c][r].get<double>();
  }
  return m;
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const LpSample<double>& f) {
  return {{"p", exponent_to_json(f.p())},
          {"mode", f.mode() == Interpolation::constant ? "constant" : "linear"},
          {"knots", f.grid().knots()},
          {"values", matrix_columns(f.values())}};
}

LpSample<double> lp_sample_from_json(const json& j) {
  return guarded("LpSample", [&] {
    const std::string mode = j.value("mode", "constant");
    if (mode != "constant" && mode != "linear") throw FormatError("LpSample: unknown mode '" + mode + "'");
    return LpSample<double>(TimeGrid<double>(j.at("knots").get<std::vector<double>>()), matrix_from_columns(j.at("values")),
                            exponent_from_json(j.at("p")), mode == "constant" ? Interpolation::constant : Interpolation::linear);
  });
}

json to_json(const AcPath<double>& eta) {
  return {{"start", std::vector<double>(eta.start().data(), eta.start().data() + eta.start().size())},
          {"density", to_json(eta.density())}};
}

AcPath<double> ac_path_from_json(const json& j) {
  return guarded("AcPath", [&] {
    const auto s = j.at("start").get<std::vector<double>>();
    return AcPath<double>(Eigen::Map<const VectorX<double>>(s.data(), static_cast<Index>(s.size())),
                          lp_sample_from_json(j.at("density")));
  });
}

json to_json(const ManifoldAcPath& eta) {
  json segs = json::array();
  for (const auto& s : eta.segments()) segs.push_back({{"chart", eta.manifold().chart_name(s.chart)}, {"acpath", to_json(s.path)}});
  return {{"manifold", to_string(eta.manifold().kind())},
          {"dim", eta.manifold().dim()},
          {"partition", eta.partition()},
          {"segments", segs}};
}

ManifoldAcPath manifold_path_from_json(const json& j) {
  return guarded("ManifoldAcPath", [&] {
    const auto kind = manifold_kind_from_string(j.at("manifold").get<std::string>());
    const LocalAddition m = kind == ManifoldKind::torus ? LocalAddition::torus(j.at("dim").get<int>()) : LocalAddition::circle();
    std::vector<ChartSegment> segs;
    for (const auto& s : j.at("segments")) {
      const std::string name = s.at("chart").get<std::string>();
      int chart = -1;
      for (int c = 0; c < m.chart_count(); ++c) {
        if (m.chart_name(c) == name) chart = c;
      }
      if (chart < 0) throw FormatError("ManifoldAcPath: unknown chart '" + name + "'");
      segs.push_back({chart, ac_path_from_json(s.at("acpath"))});
    }
    return ManifoldAcPath(m, j.at("partition").get<std::vector<double>>(), std::move(segs));
  });
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace evolflow
