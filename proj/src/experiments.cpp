#include "evolflow/experiments.hpp"

#include "evolflow/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

namespace evolflow {

namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"evolve", "continuity-study", "subdivision-study", "property-check",
                                              "torus-evolve"};
  return names;
}

namespace {

// ---------------------------------------------------------------- CSV output

class Csv {
 public:
  Csv(const fs::path& path, std::vector<std::string> header) : columns_(header.size()) {
    if (path.empty()) return;
    os_.open(path, std::ios::binary);
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    write(header);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("Csv: column count mismatch");
    if (os_.is_open()) write(cells);
  }

 private:
  void write(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
  }

  std::size_t columns_;
  std::ofstream os_;
};

std::string num(double v) { return format_number(v); }
std::string num(Index v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

fs::path csv_path(const fs::path& out, const std::string& name) { return out.empty() ? fs::path() : out / name; }

// ---------------------------------------------------------------- config access

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

double positive(const json& j, const char* key, double fallback) {
  const double v = number(j, key, fallback);
  if (!(v > 0) || !std::isfinite(v)) throw ConfigError(std::string("'") + key + "' must be positive");
  return v;
}

Index count(const json& j, const char* key, Index fallback, Index minimum = 1) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(std::string("'") + key + "' must be an integer");
  const Index v = j.at(key).get<Index>();
  if (v < minimum) throw ConfigError(std::string("'") + key + "' must be at least " + std::to_string(minimum));
  return v;
}

void allow_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

Rng instance_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

SolverOptions solver_options(const json& cfg) {
  SolverOptions o;
  if (!cfg.contains("solver")) return o;
  const json& s = cfg.at("solver");
  allow_keys(s, {"picard_tol", "max_iter", "max_cell_width", "l_max", "max_segments", "residual_refinement"}, "solver");
  o.picard_tol = positive(s, "picard_tol", o.picard_tol);
  o.max_iter = static_cast<int>(count(s, "max_iter", o.max_iter));
  o.max_cell_width = positive(s, "max_cell_width", o.max_cell_width);
  o.l_max = positive(s, "l_max", o.l_max);
  if (!(o.l_max < 1.0)) throw ConfigError("'l_max' must lie in (0, 1)");
  o.max_segments = count(s, "max_segments", o.max_segments);
  o.residual_refinement = count(s, "residual_refinement", o.residual_refinement);
  return o;
}

// ---------------------------------------------------------------- velocities

Velocity2d build_velocity(const json& spec, const fs::path& base, std::uint64_t seed, std::uint64_t tag) {
  if (!spec.is_object()) throw ConfigError("velocity must be an object");
  if (spec.contains("manifest")) {
    allow_keys(spec, {"manifest"}, "velocity");
    return read_velocity<CompactField2d>(base / spec.at("manifest").get<std::string>());
  }
  allow_keys(spec, {"kind", "half_width", "grid_cells", "time_cells", "l1", "alpha", "p", "omega", "r0", "r1", "v", "seed_offset"},
             "velocity");
  if (!spec.contains("kind") || !spec.at("kind").is_string()) throw ConfigError("velocity needs 'kind' or 'manifest'");
  const std::string kind = spec.at("kind").get<std::string>();
  const double half = positive(spec, "half_width", 1.0);
  const Index cells = count(spec, "grid_cells", 32, 6);
  const Index time_cells = count(spec, "time_cells", 1);
  const double p = spec.contains("p") ? exponent_from_json(spec.at("p")) : 1.0;
  const auto g = square_geometry(half, cells);
  Rng rng = instance_rng(seed, tag, static_cast<std::uint64_t>(count(spec, "seed_offset", 0, 0)));
  if (kind == "zero") return Velocity2d::zero(TimeGrid<double>::uniform(0.0, 1.0, time_cells), g, p);
  if (kind == "random") return random_velocity(g, rng, time_cells, positive(spec, "l1", 0.5), p);
  if (kind == "constant_alpha") return constant_alpha_velocity(g, rng, time_cells, positive(spec, "alpha", 0.5), p);
  const double r0 = positive(spec, "r0", 0.4 * half);
  const double r1 = positive(spec, "r1", 0.9 * half);
  if (!(r1 > r0)) throw ConfigError("need r1 > r0");
  if (kind == "rotation") return steady_velocity(plateau_rotation(g, number(spec, "omega", 0.3), r0, r1), p);
  if (kind == "translation") {
    const auto v = spec.value("v", std::vector<double>{0.1, 0.0});
    if (v.size() != 2) throw ConfigError("'v' must have two entries");
    return steady_velocity(plateau_translation(g, Eigen::Vector2d(v[0], v[1]), r0, r1), p);
  }
  throw ConfigError("unknown velocity kind '" + kind + "'");
}

PeriodicVelocity2d build_periodic_velocity(const json& spec, const fs::path& base, std::uint64_t seed) {
  if (!spec.is_object()) throw ConfigError("velocity must be an object");
  if (spec.contains("manifest")) {
    allow_keys(spec, {"manifest"}, "velocity");
    return read_velocity<PeriodicField2d>(base / spec.at("manifest").get<std::string>());
  }
  allow_keys(spec, {"kind", "grid_cells", "time_cells", "l1", "p", "v", "seed_offset"}, "velocity");
  const std::string kind = spec.value("kind", "");
  const Index cells = count(spec, "grid_cells", 32, 4);
  const Index time_cells = count(spec, "time_cells", 1);
  const double p = spec.contains("p") ? exponent_from_json(spec.at("p")) : 1.0;
  const auto g = torus_geometry(cells);
  Rng rng = instance_rng(seed, 5, static_cast<std::uint64_t>(count(spec, "seed_offset", 0, 0)));
  if (kind == "zero") return PeriodicVelocity2d::zero(TimeGrid<double>::uniform(0.0, 1.0, time_cells), g, p);
  if (kind == "random") return random_periodic_velocity(g, rng, time_cells, positive(spec, "l1", 0.5), p);
  if (kind == "constant") {
    const auto v = spec.value("v", std::vector<double>{0.1, 0.0});
    if (v.size() != 2) throw ConfigError("'v' must have two entries");
    return steady_velocity(constant_periodic_field(g, Eigen::Vector2d(v[0], v[1])), p);
  }
  throw ConfigError("unknown torus velocity kind '" + kind + "'");
}

// ---------------------------------------------------------------- rendering

template <typename Field>
void render_grid(const fs::path& path, const EvolutionResult<Field>& r, const typename Field::Geometry& g) {
  const Index lines = 17;
  const Index samples = 129;
  const double size = 600.0;
  const Eigen::Vector2d lo = g.lo();
  const Eigen::Vector2d span = g.hi() - g.lo();
  auto to_px = [&](const Eigen::Vector2d& y) {
    return Eigen::Vector2d(size * (y[0] - lo[0]) / span[0], size * (1.0 - (y[1] - lo[1]) / span[1]));
  };
  std::ofstream os(path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int axis = 0; axis < 2; ++axis) {
    for (Index l = 0; l < lines; ++l) {
      os << "<polyline fill=\"none\" stroke=\"" << (axis == 0 ? "#1f4e9c" : "#9c1f3a") << "\" stroke-width=\"1\" points=\"";
      for (Index s = 0; s < samples; ++s) {
        Eigen::Vector2d x;
        x[axis] = lo[axis] + span[axis] * static_cast<double>(l) / static_cast<double>(lines - 1);
        x[1 - axis] = lo[1 - axis] + span[1 - axis] * static_cast<double>(s) / static_cast<double>(samples - 1);
        const Eigen::Vector2d p = to_px(flow_point(r, 1.0, typename Field::Point(x)));
        os << num(p[0]) << ',' << num(p[1]) << ' ';
      }
      os << "\"/>\n";
    }
  }
  os << "</svg>\n";
}

void write_segments(const fs::path& path, const std::vector<SegmentDiagnostic>& segments) {
  Csv csv(path, {"k", "contraction_bound", "iterations", "picard_change", "residual"});
  for (const auto& s : segments) {
    csv.row({num(s.k), num(s.contraction_bound), num(s.iterations), num(s.picard_change), num(s.residual)});
  }
}

// ---------------------------------------------------------------- commands

struct Context {
  json cfg;
  fs::path base;
  fs::path out;
  std::uint64_t seed = 0;
  bool render = false;
  std::ostream* log = nullptr;
};

int finish_checks(Context& ctx, const std::vector<PropertyReport>& reports) {
  bool ok = true;
  Csv csv(ctx.out / "checks.csv", {"check", "passed", "cases", "worst", "threshold"});
  for (const auto& r : reports) {
    csv.row({r.name, r.passed ? "1" : "0", num(r.cases), num(r.worst), num(r.threshold)});
    *ctx.log << (r.passed ? "PASS " : "FAIL ") << r.name << ": worst " << format_number(r.worst) << " vs threshold "
             << format_number(r.threshold) << (r.detail.empty() ? "" : " (" + r.detail + ")") << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheck;
}

int cmd_evolve(Context& ctx) {
  const auto gamma = build_velocity(ctx.cfg.at("velocity"), ctx.base, ctx.seed, 1);
  const auto options = solver_options(ctx.cfg);
  const auto result = evolve(gamma, options);
  write_evolution(ctx.out / "evolution.json", result);
  const auto reloaded = read_evolution<CompactField2d>(ctx.out / "evolution.json");
  write_segments(ctx.out / "segments.csv", result.segments);

  const json checks = ctx.cfg.value("checks", json::object());
  allow_keys(checks, {"oracle_tolerance", "rk4_steps"}, "checks");
  const Index points = count(ctx.cfg, "points", 20, 0);
  const Index steps = count(checks, "rk4_steps", 4096);
  Rng rng = instance_rng(ctx.seed, 2, 0);
  Csv csv(ctx.out / "flow.csv", {"point", "x", "y", "flow_x", "flow_y", "rk4_x", "rk4_y", "error"});
  double worst = 0;
  for (Index i = 0; i < points; ++i) {
    const Eigen::Vector2d x = random_point(gamma.geometry(), rng, 0.9);
    const Eigen::Vector2d y = flow_point(result, 1.0, x);
    const Eigen::Vector2d z = rk4_oracle(gamma, x, steps).path(1.0);
    const double e = (y - z).norm();
    worst = std::max(worst, e);
    csv.row({num(i), num(x[0]), num(x[1]), num(y[0]), num(y[1]), num(z[0]), num(z[1]), num(e)});
  }
  if (ctx.render) render_grid(ctx.out / "deformed_grid.svg", result, gamma.geometry());

  std::vector<PropertyReport> reports;
  reports.push_back({"residual", result.residual <= result.tolerance, 1, result.residual, result.tolerance, ""});
  reports.push_back({"manifest_reload", reloaded.path.times() == result.path.times() && reloaded.n == result.n, 1, 0, 0, ""});
  if (checks.contains("oracle_tolerance")) {
    const double tol = positive(checks, "oracle_tolerance", 1e-4);
    reports.push_back({"oracle", worst <= tol, points, worst, tol, ""});
  }
  *ctx.log << "evolve: n = " << result.n << ", residual " << format_number(result.residual) << ", tolerance "
           << format_number(result.tolerance) << '\n';
  return finish_checks(ctx, reports);
}

int cmd_torus(Context& ctx) {
  const auto gamma = build_periodic_velocity(ctx.cfg.at("velocity"), ctx.base, ctx.seed);
  const auto options = solver_options(ctx.cfg);
  const auto result = evolve_torus(gamma, options);
  write_evolution(ctx.out / "evolution.json", result);
  const auto reloaded = read_evolution<PeriodicField2d>(ctx.out / "evolution.json");
  write_segments(ctx.out / "segments.csv", result.segments);

  const json checks = ctx.cfg.value("checks", json::object());
  allow_keys(checks, {"oracle_tolerance", "rk4_steps"}, "checks");
  const Index points = count(ctx.cfg, "points", 20, 0);
  const Index steps = count(checks, "rk4_steps", 4096);
  Rng rng = instance_rng(ctx.seed, 6, 0);
  Csv csv(ctx.out / "flow.csv", {"point", "x", "y", "flow_x", "flow_y", "rk4_x", "rk4_y", "error"});
  double worst = 0;
  for (Index i = 0; i < points; ++i) {
    const Eigen::Vector2d x(uniform(rng, 0, 1), uniform(rng, 0, 1));
    const Eigen::Vector2d y = torus_flow_point(result, 1.0, x);
    Eigen::Vector2d z = rk4_oracle(gamma, x, steps).path(1.0);
    double e = 0;
    for (int d = 0; d < 2; ++d) {
      z[d] = wrap_unit(z[d]);
      e += wrap_half(y[d] - z[d]) * wrap_half(y[d] - z[d]);
    }
    e = std::sqrt(e);
    worst = std::max(worst, e);
    csv.row({num(i), num(x[0]), num(x[1]), num(y[0]), num(y[1]), num(z[0]), num(z[1]), num(e)});
  }
  if (ctx.render) render_grid(ctx.out / "deformed_grid.svg", result, gamma.geometry());
  std::vector<PropertyReport> reports;
  reports.push_back({"residual", result.residual <= result.tolerance, 1, result.residual, result.tolerance, ""});
  reports.push_back({"manifest_reload", reloaded.path.times() == result.path.times() && reloaded.n == result.n, 1, 0, 0, ""});
  if (checks.contains("oracle_tolerance")) {
    const double tol = positive(checks, "oracle_tolerance", 1e-4);
    reports.push_back({"oracle", worst <= tol, points, worst, tol, ""});
  }
  *ctx.log << "torus-evolve: n = " << result.n << ", residual " << format_number(result.residual) << '\n';
  return finish_checks(ctx, reports);
}

int cmd_continuity(Context& ctx) {
  const auto gamma = build_velocity(ctx.cfg.at("velocity"), ctx.base, ctx.seed, 1);
  const auto delta = build_velocity(ctx.cfg.at("delta"), ctx.base, ctx.seed, 3);
  if (!(gamma.geometry() == delta.geometry())) throw ConfigError("velocity and delta must share the spatial grid");
  const Index levels = count(ctx.cfg, "levels", 6, 2);
  const json checks = ctx.cfg.value("checks", json::object());
  allow_keys(checks, {"monotone_factor", "final_distance"}, "checks");
  const auto rows = continuity_probe(gamma, delta, levels, solver_options(ctx.cfg));
  Csv csv(ctx.out / "continuity.csv", {"level", "scale", "distance", "ratio"});
  double worst_ratio = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double ratio = k == 0 ? 0.0 : (rows[k - 1].distance > 0 ? rows[k].distance / rows[k - 1].distance : 0.0);
    if (k > 0) worst_ratio = std::max(worst_ratio, ratio);
    csv.row({num(rows[k].level), num(rows[k].scale), num(rows[k].distance), num(ratio)});
  }
  std::vector<PropertyReport> reports;
  const double factor = positive(checks, "monotone_factor", 1.1);
  reports.push_back({"non_increasing", worst_ratio <= factor, levels, worst_ratio, factor, ""});
  if (checks.contains("final_distance")) {
    const double limit = positive(checks, "final_distance", 1e-3);
    reports.push_back({"final_distance", rows.back().distance < limit, 1, rows.back().distance, limit, ""});
  }
  return finish_checks(ctx, reports);
}

int cmd_subdivision(Context& ctx) {
  const auto gamma = build_velocity(ctx.cfg.at("velocity"), ctx.base, ctx.seed, 1);
  const auto ns = ctx.cfg.value("segments", std::vector<Index>{1, 2, 4, 8, 16});
  if (ns.empty()) throw ConfigError("'segments' must not be empty");
  for (Index n : ns) {
    if (n < 1) throw ConfigError("'segments' entries must be positive");
  }
  const json checks = ctx.cfg.value("checks", json::object());
  allow_keys(checks, {"constant_alpha", "relative_tolerance", "consistency_factor"}, "checks");
  const double rel = positive(checks, "relative_tolerance", 1e-12);
  const bool constant = checks.value("constant_alpha", false);
  const double total = contraction_bound(gamma).l1;
  Csv csv(ctx.out / "subdivision.csv", {"n", "max_budget", "total_over_n", "relative_error", "budget_sum"});
  double worst_sum = 0;
  double worst_max = 0;
  for (Index n : ns) {
    const auto b = subdivision_budgets(gamma, n);
    double mx = 0, sum = 0;
    for (double v : b) {
      mx = std::max(mx, v);
      sum += v;
    }
    const double expect = total / static_cast<double>(n);
    const double err = std::abs(mx - expect) / expect;
    worst_max = std::max(worst_max, err);
    worst_sum = std::max(worst_sum, std::abs(sum - total) / total);
    csv.row({num(n), num(mx), num(expect), num(err), num(sum)});
  }
  std::vector<PropertyReport> reports;
  reports.push_back({"budget_sum", worst_sum <= rel, static_cast<Index>(ns.size()), worst_sum, rel, ""});
  if (constant) reports.push_back({"constant_alpha_decay", worst_max <= rel, static_cast<Index>(ns.size()), worst_max, rel, ""});
  if (checks.contains("consistency_factor")) {
    const double factor = positive(checks, "consistency_factor", 10.0);
    auto options = solver_options(ctx.cfg);
    const Index n = choose_subdivision(gamma, options);
    options.forced_segments = n;
    const auto r1 = evolve(gamma, options);
    options.forced_segments = 2 * n;
    const auto r2 = evolve(gamma, options);
    const double d = group_path_distance(r1.path, r2.path);
    const double tol = r1.tolerance + r2.tolerance;
    Csv c2(ctx.out / "consistency.csv", {"n", "distance", "tolerance_n", "tolerance_2n"});
    c2.row({num(n), num(d), num(r1.tolerance), num(r2.tolerance)});
    reports.push_back({"n_vs_2n", d <= factor * tol, 1, d, factor * tol, ""});
  }
  return finish_checks(ctx, reports);
}

using Checker = PropertyReport (*)(const json&, std::uint64_t, const fs::path&);

const std::vector<std::pair<std::string, Checker>>& property_table() {
  static const std::vector<std::pair<std::string, Checker>> table{
      {"contraction", check_contraction}, {"oracle", check_oracle},         {"closed_form", check_closed_form},
      {"subdivision", check_subdivision}, {"composition", check_composition}, {"group", check_group},
      {"budget", check_budget},           {"charts", check_charts},         {"ac_space", check_ac_space}};
  return table;
}

int cmd_properties(Context& ctx) {
  const json& props = ctx.cfg.at("properties");
  std::set<std::string> known;
  for (const auto& [name, fn] : property_table()) known.insert(name);
  allow_keys(props, known, "properties");
  std::vector<PropertyReport> reports;
  for (const auto& [name, fn] : property_table()) {
    if (!props.contains(name)) continue;
    reports.push_back(fn(props.at(name), ctx.seed, ctx.out));
  }
  if (reports.empty()) throw ConfigError("'properties' selects nothing");
  return finish_checks(ctx, reports);
}

void validate_top(const json& cfg, const std::string& command) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"evolve", {"velocity", "solver", "checks", "points"}},
      {"torus-evolve", {"velocity", "solver", "checks", "points"}},
      {"continuity-study", {"velocity", "delta", "levels", "solver", "checks"}},
      {"subdivision-study", {"velocity", "segments", "solver", "checks"}},
      {"property-check", {"properties"}}};
  const auto it = keys.find(command);
  if (it == keys.end()) throw ConfigError("unknown command '" + command + "'");
  std::set<std::string> allowed = it->second;
  allowed.insert({"command", "seed", "description"});
  allow_keys(cfg, allowed, "configuration");
  if (cfg.contains("command") && cfg.at("command") != command) {
    throw ConfigError("configuration is for '" + cfg.at("command").get<std::string>() + "', not '" + command + "'");
  }
  if (cfg.contains("seed") && !cfg.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
  for (const auto& required : std::vector<std::string>{"velocity", "delta", "properties"}) {
    if (it->second.count(required) && !cfg.contains(required)) throw ConfigError("missing '" + required + "'");
  }
  solver_options(cfg);
}

}  // namespace

json load_config(const fs::path& path, const std::string& command) {
  json cfg;
  try {
    cfg = read_json_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  validate_top(cfg, command);
  return cfg;
}

int run_command(const std::string& command, const RunOptions& options, std::ostream& log) {
  Context ctx;
  ctx.log = &log;
  ctx.out = options.out;
  ctx.render = options.render;
  try {
    if (options.threads < 1) throw ConfigError("--threads must be positive");
    ctx.cfg = load_config(options.config, command);
    ctx.base = options.config.parent_path();
    ctx.seed = options.seed ? *options.seed : ctx.cfg.value("seed", std::uint64_t{0});
    fs::create_directories(ctx.out);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const int previous = thread_count();
  set_thread_count(options.threads);
  int code = kExitOk;
  try {
    if (command == "evolve") code = cmd_evolve(ctx);
    else if (command == "torus-evolve") code = cmd_torus(ctx);
    else if (command == "continuity-study") code = cmd_continuity(ctx);
    else if (command == "subdivision-study") code = cmd_subdivision(ctx);
    else code = cmd_properties(ctx);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const FormatError& e) {
    log << "config error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const std::exception& e) {
    log << "solver failure: " << e.what() << '\n';
    write_json_file(ctx.out / "diagnostics.json", {{"command", command}, {"error", e.what()}});
    code = kExitSolver;
  }
  set_thread_count(previous);
  return code;
}

// ---------------------------------------------------------------- properties

namespace {

std::shared_ptr<const Geometry2d> spec_geometry(const json& spec, double half, Index cells) {
  return square_geometry(positive(spec, "half_width", half), count(spec, "grid_cells", cells, 6));
}

ContinuousTrace<double> random_trace(Rng& rng, const Eigen::Vector2d& x, Index cells, double amplitude) {
  std::vector<double> k{0.0};
  for (Index i = 1; i < cells; ++i) k.push_back((static_cast<double>(i) + uniform(rng, -0.3, 0.3)) / static_cast<double>(cells));
  k.push_back(1.0);
  MatrixX<double> v(2, cells + 1);
  for (Index i = 0; i <= cells; ++i) v.col(i) = x + amplitude * Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1));
  return ContinuousTrace<double>(TimeGrid<double>(k), v);
}

}  // namespace

PropertyReport check_contraction(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "grid_cells", "half_width", "time_cells", "bound_min", "bound_max", "slack", "trace_cells"},
             "contraction");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 200);
  const double lo = positive(spec, "bound_min", 0.1);
  const double hi = positive(spec, "bound_max", 0.9);
  const double slack = positive(spec, "slack", 1e-10);
  const Index trace_cells = count(spec, "trace_cells", 16);
  const Index time_cells = count(spec, "time_cells", 2);
  Csv csv(csv_path(out, "property_contraction.csv"), {"instance", "bound", "trace_distance", "image_distance", "ratio"});
  PropertyReport r{"contraction", true, instances, 0, slack, ""};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 11, static_cast<std::uint64_t>(i));
    const auto gamma = random_velocity(g, rng, time_cells, uniform(rng, lo, hi));
    const double bound = contraction_bound(gamma).l1;
    const Eigen::Vector2d x = random_point(*g, rng, 0.8);
    const auto z1 = random_trace(rng, x, trace_cells, 0.3);
    const double shift = uniform(rng, 1e-3, 0.2);
    MatrixX<double> moved = z1.values();
    for (Index c = 0; c < moved.cols(); ++c) moved.col(c) += shift * Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1));
    const ContinuousTrace<double> z2(z1.grid(), moved);
    const double d = sup_distance(z1, z2);
    const double image = sup_distance(contraction_operator(gamma, x, z1), contraction_operator(gamma, x, z2));
    // Excess over the Lipschitz bound; must stay below the slack.
    const double excess = image - bound * d;
    r.worst = i == 0 ? excess : std::max(r.worst, excess);
    if (!(excess <= slack)) r.passed = false;
    csv.row({num(i), num(bound), num(d), num(image), num(bound * d > 0 ? image / (bound * d) : 0.0)});
  }
  r.detail = "largest image distance minus bound times trace distance";
  return r;
}

PropertyReport check_oracle(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "points", "grid_cells", "half_width", "bound_min", "bound_max", "rk4_steps", "tolerance"},
             "oracle");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 20);
  const Index points = count(spec, "points", 50);
  const double lo = positive(spec, "bound_min", 0.1);
  const double hi = positive(spec, "bound_max", 0.4);
  const Index steps = count(spec, "rk4_steps", 4096);
  const double tol = positive(spec, "tolerance", 1e-4);
  Csv csv(csv_path(out, "property_oracle.csv"),
          {"instance", "point", "x", "y", "flow_x", "flow_y", "rk4_x", "rk4_y", "error"});
  PropertyReport r{"oracle", true, instances * points, 0, tol, ""};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 12, static_cast<std::uint64_t>(i));
    const Index cells = 1 + static_cast<Index>(rng() % 4);
    const auto gamma = random_velocity(g, rng, cells, uniform(rng, lo, hi));
    const auto result = evolve(gamma);
    for (Index k = 0; k < points; ++k) {
      const Eigen::Vector2d x = random_point(*g, rng, 0.9);
      const Eigen::Vector2d y = flow_point(result, 1.0, x);
      const Eigen::Vector2d z = rk4_oracle(gamma, x, steps).path(1.0);
      const double e = (y - z).norm();
      r.worst = std::max(r.worst, e);
      csv.row({num(i), num(k), num(x[0]), num(x[1]), num(y[0]), num(y[1]), num(z[0]), num(z[1]), num(e)});
    }
  }
  r.passed = r.worst <= tol;
  return r;
}

PropertyReport check_closed_form(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"omega", "half_width", "grid_cells", "r0", "r1", "points", "radius", "translation", "tolerance",
                    "picard_tolerance"},
             "closed_form");
  const auto g = spec_geometry(spec, 2.0, 32);
  const double omega = number(spec, "omega", 0.3);
  const double r0 = positive(spec, "r0", 0.8);
  const double r1 = positive(spec, "r1", 1.8);
  const Index points = count(spec, "points", 20);
  const double radius = positive(spec, "radius", 0.4);
  const double tol = positive(spec, "tolerance", 1e-5);
  const double picard_tol = positive(spec, "picard_tolerance", 1e-6);
  const auto tv = spec.value("translation", std::vector<double>{0.1, -0.05});
  if (tv.size() != 2) throw ConfigError("'translation' must have two entries");
  const Eigen::Vector2d v(tv[0], tv[1]);

  const auto rot = steady_velocity(plateau_rotation(g, omega, r0, r1));
  const auto trans = steady_velocity(plateau_translation(g, v, r0, r1));
  const auto rot_result = evolve(rot);
  const auto trans_result = evolve(trans);
  Csv csv(csv_path(out, "property_closed_form.csv"), {"case", "x", "y", "t", "error"});
  PropertyReport r{"closed_form", true, 0, 0, tol, ""};
  double outside = 0;
  Rng rng = instance_rng(seed, 13, 0);
  auto rotate = [](double a, const Eigen::Vector2d& x) {
    return Eigen::Vector2d(std::cos(a) * x[0] - std::sin(a) * x[1], std::sin(a) * x[0] + std::cos(a) * x[1]);
  };
  for (Index i = 0; i < points; ++i) {
    const double rad = radius * std::sqrt(uniform(rng, 0, 1));
    const double ang = uniform(rng, 0, 2 * std::numbers::pi);
    const Eigen::Vector2d x(rad * std::cos(ang), rad * std::sin(ang));
    for (double t : {0.5, 1.0}) {
      const double e = (flow_point(rot_result, t, x) - rotate(omega * t, x)).norm();
      r.worst = std::max(r.worst, e);
      r.passed = r.passed && e <= tol;
      csv.row({"rotation", num(x[0]), num(x[1]), num(t), num(e)});
      const double et = (flow_point(trans_result, t, x) - (x + t * v)).norm();
      r.worst = std::max(r.worst, et);
      r.passed = r.passed && et <= tol;
      csv.row({"translation", num(x[0]), num(x[1]), num(t), num(et)});
    }
    if (contraction_bound(rot).l1 < 1.0) {
      const double ep = (picard_point(rot, x).path(1.0) - rotate(omega, x)).norm();
      r.passed = r.passed && ep <= picard_tol;
      csv.row({"rotation_picard", num(x[0]), num(x[1]), num(1.0), num(ep)});
    }
    // A point outside the box K.
    const Eigen::Vector2d far = g->hi() + Eigen::Vector2d(uniform(rng, 0.01, 1.0), uniform(rng, -1.0, 1.0));
    for (double t : {0.5, 1.0}) {
      const double e = std::max((flow_point(rot_result, t, far) - far).norm(), (flow_point(trans_result, t, far) - far).norm());
      outside = std::max(outside, e);
      csv.row({"outside", num(far[0]), num(far[1]), num(t), num(e)});
    }
    r.cases += 1;
  }
  if (outside != 0.0) r.passed = false;
  r.detail = "outside-K displacement " + format_number(outside);
  return r;
}

PropertyReport check_subdivision(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "grid_cells", "half_width", "bound_min", "bound_max", "factor"}, "subdivision");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 20);
  const double lo = positive(spec, "bound_min", 0.6);
  const double hi = positive(spec, "bound_max", 2.0);
  const double factor = positive(spec, "factor", 10.0);
  Csv csv(csv_path(out, "property_subdivision.csv"), {"instance", "l1", "n", "distance", "tolerance_n", "tolerance_2n", "ratio"});
  PropertyReport r{"subdivision", true, instances, 0, factor, "distance over combined declared tolerance"};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 14, static_cast<std::uint64_t>(i));
    const Index cells = 1 + static_cast<Index>(rng() % 4);
    const auto gamma = random_velocity(g, rng, cells, uniform(rng, lo, hi));
    SolverOptions o;
    const Index n = choose_subdivision(gamma, o);
    o.forced_segments = n;
    const auto a = evolve(gamma, o);
    o.forced_segments = 2 * n;
    const auto b = evolve(gamma, o);
    const double d = group_path_distance(a.path, b.path);
    const double ratio = d / (a.tolerance + b.tolerance);
    r.worst = std::max(r.worst, ratio);
    r.passed = r.passed && ratio <= factor;
    csv.row({num(i), num(contraction_bound(gamma).l1), num(n), num(d), num(a.tolerance), num(b.tolerance), num(ratio)});
  }
  return r;
}

PropertyReport check_composition(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "grid_cells", "half_width", "bound", "factor"}, "composition");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 5);
  const double bound = positive(spec, "bound", 0.35);
  const double factor = positive(spec, "factor", 10.0);
  Csv csv(csv_path(out, "property_composition.csv"), {"instance", "n", "defect", "tolerance", "ratio"});
  PropertyReport r{"composition", true, instances, 0, factor, "defect over combined declared tolerance"};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 15, static_cast<std::uint64_t>(i));
    const auto g1 = random_velocity(g, rng, 1 + static_cast<Index>(rng() % 3), bound);
    const auto g2 = random_velocity(g, rng, 1 + static_cast<Index>(rng() % 3), bound);
    const auto whole = evolve(concatenate(g1, g2));
    const auto e1 = evolve(g1);
    const auto e2 = evolve(g2);
    const auto law = star_displacement(e2.path.back(), e1.path.back());
    const double defect = vf_sup_norm(whole.path.back() - law);
    const double tol = whole.tolerance + e1.tolerance + e2.tolerance;
    const double ratio = defect / tol;
    r.worst = std::max(r.worst, ratio);
    r.passed = r.passed && ratio <= factor;
    csv.row({num(i), num(whole.n), num(defect), num(tol), num(ratio)});
  }
  return r;
}

PropertyReport check_group(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "grid_cells", "half_width", "alpha_max", "inverse_tolerance", "associativity_factor"}, "group");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 10);
  const double alpha_max = positive(spec, "alpha_max", 0.3);
  const double inv_tol = positive(spec, "inverse_tolerance", 1e-8);
  const double factor = positive(spec, "associativity_factor", 10.0);
  Csv csv(csv_path(out, "property_group.csv"), {"instance", "alpha", "neutral_left", "neutral_right", "resampling_tolerance",
                                                 "inverse_defect", "associativity_defect", "associativity_tolerance"});
  PropertyReport r{"group", true, instances, 0, inv_tol, "worst inverse defect"};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 16, static_cast<std::uint64_t>(i));
    const GroupElement<CompactField2d> phi(random_field(g, rng, uniform(rng, 0.05, alpha_max)));
    const GroupElement<CompactField2d> b(random_field(g, rng, uniform(rng, 0.05, alpha_max)));
    const GroupElement<CompactField2d> c(random_field(g, rng, uniform(rng, 0.05, alpha_max)));
    const auto e = GroupElement<CompactField2d>::neutral(g);
    const double rt = resampling_tolerance(phi.displacement());
    const double left = vf_sup_norm(star(e, phi).displacement() - phi.displacement());
    const double right = vf_sup_norm(star(phi, e).displacement() - phi.displacement());
    const double inv = vf_sup_norm(star(phi, inverse(phi)).displacement());
    const auto ab_c = star(star(phi, b), c);
    const auto a_bc = star(phi, star(b, c));
    const double assoc = vf_sup_norm(ab_c.displacement() - a_bc.displacement());
    const double assoc_tol =
        factor * std::max(resampling_tolerance(ab_c.displacement()), resampling_tolerance(a_bc.displacement()));
    r.worst = std::max(r.worst, inv);
    r.passed = r.passed && left <= rt && right <= rt && inv <= inv_tol && assoc <= assoc_tol;
    csv.row({num(i), num(phi.alpha()), num(left), num(right), num(rt), num(inv), num(assoc), num(assoc_tol)});
  }
  return r;
}

PropertyReport check_budget(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "grid_cells", "half_width", "segments", "relative_tolerance", "time_cells"}, "budget");
  const auto g = spec_geometry(spec, 1.0, 32);
  const Index instances = count(spec, "instances", 5);
  const auto ns = spec.value("segments", std::vector<Index>{1, 2, 4, 8, 16});
  const double rel = positive(spec, "relative_tolerance", 1e-12);
  const Index time_cells = count(spec, "time_cells", 5);
  Csv csv(csv_path(out, "property_budget.csv"), {"instance", "n", "max_budget", "total_over_n", "relative_error"});
  PropertyReport r{"budget", true, instances * static_cast<Index>(ns.size()), 0, rel, "relative error of max_k budget"};
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 17, static_cast<std::uint64_t>(i));
    const auto gamma = constant_alpha_velocity(g, rng, time_cells, uniform(rng, 0.3, 1.5));
    const double total = contraction_bound(gamma).l1;
    for (Index n : ns) {
      const auto b = subdivision_budgets(gamma, n);
      const double mx = *std::max_element(b.begin(), b.end());
      const double expect = total / static_cast<double>(n);
      const double err = std::abs(mx - expect) / expect;
      r.worst = std::max(r.worst, err);
      csv.row({num(i), num(n), num(mx), num(expect), num(err)});
    }
  }
  r.passed = r.worst <= rel;
  return r;
}

namespace {

AcPath<double> random_ac_path(Rng& rng, Index dim, double a, double b, Index cells, double scale, double p = 1.0) {
  std::vector<double> k{a};
  for (Index i = 1; i < cells; ++i) {
    k.push_back(a + (b - a) * (static_cast<double>(i) + uniform(rng, -0.3, 0.3)) / static_cast<double>(cells));
  }
  k.push_back(b);
  VectorX<double> start(dim);
  for (Index d = 0; d < dim; ++d) start[d] = uniform(rng, -scale, scale);
  MatrixX<double> dens(dim, cells);
  for (Index c = 0; c < cells; ++c) {
    for (Index d = 0; d < dim; ++d) dens(d, c) = uniform(rng, -scale, scale);
  }
  return AcPath<double>(start, LpSample<double>(TimeGrid<double>(k), dens, p));
}

// Random continuous torus path in the lift chart over a random partition.
ManifoldAcPath random_torus_path(Rng& rng, int dim, Index pieces) {
  std::vector<double> part{0.0};
  for (Index i = 1; i < pieces; ++i) part.push_back((static_cast<double>(i) + uniform(rng, -0.3, 0.3)) / static_cast<double>(pieces));
  part.push_back(1.0);
  std::vector<ChartSegment> segs;
  VectorX<double> start(dim);
  for (int d = 0; d < dim; ++d) start[d] = uniform(rng, 0, 1);
  for (Index i = 0; i < pieces; ++i) {
    auto seg = random_ac_path(rng, dim, part[static_cast<std::size_t>(i)], part[static_cast<std::size_t>(i + 1)], 4, 2.0);
    seg = AcPath<double>(start, seg.density());
    start = seg(seg.b());
    segs.push_back({0, seg});
  }
  return ManifoldAcPath(LocalAddition::torus(dim), part, std::move(segs));
}

double tuple_distance(const SectionTuple& s1, const SectionTuple& s2) {
  double worst = 0;
  for (std::size_t i = 0; i < s1.tau.size(); ++i) {
    const auto grid = common_refinement(s1.tau[i].grid(), s2.tau[i].grid());
    for (double t : grid.knots()) worst = std::max(worst, (s1.tau[i](t) - s2.tau[i](t)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

PropertyReport check_charts(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "tolerance", "circle_tolerance", "fd_tolerance", "fd_step"}, "charts");
  const Index instances = count(spec, "instances", 20);
  const double tol = positive(spec, "tolerance", 1e-11);
  const double circle_tol = positive(spec, "circle_tolerance", 1e-12);
  const double fd_tol = positive(spec, "fd_tolerance", 1e-6);
  const double step = positive(spec, "fd_step", 1e-5);
  Csv csv(csv_path(out, "property_charts.csv"), {"instance", "roundtrip", "cocycle", "circle_transition", "fd_torus", "fd_circle"});
  PropertyReport r{"charts", true, instances, 0, tol, "worst torus roundtrip or cocycle defect"};
  const auto circle = LocalAddition::circle();
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 18, static_cast<std::uint64_t>(i));
    const auto eta = random_torus_path(rng, 2, 3);
    const auto sigma = random_ac_path(rng, 2, 0.0, 1.0, 5, 0.15);
    const auto tau = section_embed(eta, sigma);
    const double roundtrip = tuple_distance(chart_psi_inv(eta, chart_psi(eta, tau)), tau);
    // A nearby path xi: eta shifted by a small constant in the lift.
    VectorX<double> c(2);
    c << uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1);
    std::vector<ChartSegment> shifted;
    for (const auto& s : eta.segments()) shifted.push_back({0, AcPath<double>(s.path.start() + c, s.path.density())});
    const ManifoldAcPath xi(eta.manifold(), eta.partition(), std::move(shifted));
    const double cocycle = tuple_distance(transition(eta, xi, transition(xi, eta, tau)), tau);

    // Stereographic transition at u = 2 and at a random chart point.
    const double w = uniform(rng, -1, 1);
    const VectorX<double> u2 = VectorX<double>::Constant(1, 2.0);
    const double ct = std::abs(tangent_transition(circle, 0, 1, u2, VectorX<double>::Constant(1, w))[0] + w / 4.0);

    // Normalization of the local addition: d/ds Sigma(p, s v) at s = 0 equals v.
    VectorX<double> p(2), v(2);
    p << uniform(rng, 0, 1), uniform(rng, 0, 1);
    v << uniform(rng, -1, 1), uniform(rng, -1, 1);
    const auto torus = LocalAddition::torus(2);
    VectorX<double> fd(2);
    const auto plus = torus.sigma(p, step * v);
    const auto minus = torus.sigma(p, -step * v);
    for (int d = 0; d < 2; ++d) fd[d] = wrap_half(plus[d] - minus[d]) / (2 * step);
    const double fd_torus = (fd - v).cwiseAbs().maxCoeff();
    // Circle: the same check through chart_psi in stereographic coordinates.
    const double theta = uniform(rng, -1.2, 1.2) - 0.5 * std::numbers::pi;
    const auto base = const_path(circle, VectorX<double>::Constant(1, theta));
    SectionTuple dir;
    dir.charts = {base.segments().front().chart};
    const double wc = uniform(rng, -1, 1);
    dir.tau = {AcPath<double>::constant(VectorX<double>::Constant(1, wc), base.segments().front().path.grid(), 1.0)};
    auto scaled = [&](double s) {
      SectionTuple t = dir;
      t.tau[0] = s * dir.tau[0];
      return chart_psi(base, t).segments().front().path.start()[0];
    };
    const double fd_circle = std::abs((scaled(step) - scaled(-step)) / (2 * step) - wc);

    r.worst = std::max({r.worst, roundtrip, cocycle});
    r.passed = r.passed && roundtrip <= tol && cocycle <= tol && ct <= circle_tol && fd_torus <= fd_tol && fd_circle <= fd_tol;
    csv.row({num(i), num(roundtrip), num(cocycle), num(ct), num(fd_torus), num(fd_circle)});
  }
  return r;
}

PropertyReport check_ac_space(const json& spec, std::uint64_t seed, const fs::path& out) {
  allow_keys(spec, {"instances", "cells", "subcells", "factor"}, "ac_space");
  const Index instances = count(spec, "instances", 20);
  const Index cells = count(spec, "cells", 8);
  const Index subcells = count(spec, "subcells", 4);
  const double factor = positive(spec, "factor", 10.0);
  Csv csv(csv_path(out, "property_ac_space.csv"), {"instance", "phi_roundtrip", "reintegration", "reparam_start",
                                                    "reparam_end", "superpose_error", "superpose_bound"});
  PropertyReport r{"ac_space", true, instances, 0, factor, "superposition error over h^2"};
  SmoothMap<double> f;
  f.value = [](const VectorX<double>& x) {
    VectorX<double> y(2);
    y << std::sin(x[0]) + x[1] * x[1], x[0] * x[1];
    return y;
  };
  f.jacobian = [](const VectorX<double>& x) {
    MatrixX<double> j(2, 2);
    j << std::cos(x[0]), 2 * x[1], x[1], x[0];
    return j;
  };
  for (Index i = 0; i < instances; ++i) {
    Rng rng = instance_rng(seed, 19, static_cast<std::uint64_t>(i));
    const auto eta = random_ac_path(rng, 2, 0.0, 1.0, cells, 1.0, 2.0);
    const auto [s, d] = ac_phi(eta);
    const auto back = ac_phi_inv(s, d);
    const double phi_rt = std::max((back.start() - eta.start()).cwiseAbs().maxCoeff(),
                                   (back.density().values() - eta.density().values()).cwiseAbs().maxCoeff());
    const auto [trace, dens] = ac_embed(eta, eta.grid().refined(3));
    const double reint = reintegration_defect(trace, dens);
    const double c = 0.25 * static_cast<double>(rng() % 4);
    const double len = std::ldexp(1.0, -static_cast<int>(rng() % 3));
    const auto rep = ac_reparam(eta, c, c + len);
    const double rep_start = (rep(c) - eta(0.0)).cwiseAbs().maxCoeff();
    const double rep_end = (rep(c + len) - eta(1.0)).cwiseAbs().maxCoeff();
    const auto sup = ac_superpose(f, eta, subcells);
    const auto fine = eta.grid().refined(subcells);
    double err = 0, h = 0;
    for (Index k = 0; k < fine.cells(); ++k) {
      const double w = fine.width(k);
      h = std::max(h, w);
      const VectorX<double> secant = (f.value(eta(fine.knot(k + 1))) - f.value(eta(fine.knot(k)))) / w;
      err = std::max(err, (sup.density().values().col(k) - secant).cwiseAbs().maxCoeff());
    }
    const double bound = factor * h * h;
    r.worst = std::max(r.worst, err / (h * h));
    r.passed = r.passed && phi_rt == 0.0 && reint == 0.0 && rep_start == 0.0 &&
               rep_end <= 8 * std::numeric_limits<double>::epsilon() * (1.0 + eta(1.0).cwiseAbs().maxCoeff()) && err <= bound;
    csv.row({num(i), num(phi_rt), num(reint), num(rep_start), num(rep_end), num(err), num(bound)});
  }
  return r;
}

}  // namespace evolflow
