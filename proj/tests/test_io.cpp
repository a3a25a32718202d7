#include "evolflow/instances.hpp"
#include "evolflow/io.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>

using namespace evolflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evolflow_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("exponents") {
  CHECK(std::isinf(exponent_from_json(exponent_to_json(std::numeric_limits<double>::infinity()))));
  CHECK(exponent_from_json(json(2.5)) == 2.5);
  CHECK_THROWS_AS(exponent_from_json(json(0.5)), FormatError);
  CHECK_THROWS_AS(exponent_from_json(json("two")), FormatError);
}

TEST_CASE("samples and paths round-trip through JSON") {
  MatrixX<double> v(2, 3);
  v << 1, 2, 3, 4, 5, 6;
  const LpSample<double> f(TimeGrid<double>({0, 0.1, 0.7, 1}), v, 3.0);
  const auto back = lp_sample_from_json(json::parse(to_json(f).dump()));
  CHECK(back.values() == f.values());
  CHECK(back.grid() == f.grid());
  CHECK(back.p() == 3.0);
  const LpSample<double> lin(TimeGrid<double>::uniform(0, 1, 2), v, 1.0, Interpolation::linear);
  CHECK(lp_sample_from_json(to_json(lin)).mode() == Interpolation::linear);

  const AcPath<double> eta(VectorX<double>::Constant(2, 0.1 + 0.2), f);
  const auto eb = ac_path_from_json(json::parse(to_json(eta).dump()));
  CHECK(eb.start() == eta.start());
  CHECK_THROWS_AS(lp_sample_from_json(json{{"p", 1}, {"knots", {0, 1}}}), FormatError);
  CHECK_THROWS_AS(lp_sample_from_json(json{{"p", 1}, {"knots", {0, 1}}, {"values", {{1, 2}, {3}}}}), FormatError);

  const auto torus = LocalAddition::torus(2);
  const ManifoldAcPath m(torus, {0.0, 1.0}, {{0, eta}});
  const auto mb = manifold_path_from_json(json::parse(to_json(m).dump()));
  CHECK(manifold_path_distance(mb, m) == 0.0);
  json bad = to_json(m);
  bad["segments"][0]["chart"] = "north";
  CHECK_THROWS_AS(manifold_path_from_json(bad), FormatError);
}

TEST_CASE("binary field files") {
  const auto dir = scratch("fields");
  Rng rng(1);
  const auto g = square_geometry(1.0, 16);
  const auto f = random_field(g, rng, 0.5);
  write_field(dir / "f.cfld", f);
  CHECK(fs::exists(dir / "f.cfld.json"));
  const auto back = read_field<CompactField2d>(dir / "f.cfld");
  CHECK(back.coefficients() == f.coefficients());
  CHECK(back.geometry() == f.geometry());

  const auto pg = torus_geometry(8);
  const auto pf = random_periodic_field(pg, rng, 0.5);
  write_field(dir / "p.cfld", pf);
  CHECK(read_field<PeriodicField2d>(dir / "p.cfld").coefficients() == pf.coefficients());
  CHECK_THROWS_AS(read_field<CompactField2d>(dir / "p.cfld"), FormatError);
  CHECK_THROWS_AS(read_field<CompactField1d>(dir / "f.cfld"), FormatError);
  CHECK_THROWS_AS(read_field<CompactField2d>(dir / "missing.cfld"), FormatError);

  // Truncated payload.
  fs::copy_file(dir / "f.cfld", dir / "t.cfld");
  fs::resize_file(dir / "t.cfld", fs::file_size(dir / "t.cfld") / 2);
  CHECK_THROWS_AS(read_field<CompactField2d>(dir / "t.cfld"), FormatError);
}

TEST_CASE("velocity and evolution manifests") {
  const auto dir = scratch("manifests");
  Rng rng(2);
  const auto g = square_geometry(1.0, 16);
  const auto gamma = random_velocity(g, rng, 3, 0.9, 2.0);
  write_velocity(dir / "velocity.json", gamma);
  const auto back = read_velocity<CompactField2d>(dir / "velocity.json");
  CHECK(back.grid() == gamma.grid());
  CHECK(back.p() == 2.0);
  for (Index c = 0; c < 3; ++c) CHECK(back.field(c).coefficients() == gamma.field(c).coefficients());
  CHECK(&back.field(0).geometry() == &back.field(2).geometry());

  const auto r = evolve(gamma);
  write_evolution(dir / "evolution.json", r);
  const auto rb = read_evolution<CompactField2d>(dir / "evolution.json");
  CHECK(rb.n == r.n);
  CHECK(rb.residual == r.residual);
  CHECK(rb.tolerance == r.tolerance);
  CHECK(rb.path.times() == r.path.times());
  CHECK(group_path_distance(rb.path, r.path) == 0.0);

  json broken = read_json_file(dir / "velocity.json");
  broken["knots"] = {0.0, 1.0};
  write_json_file(dir / "broken.json", broken);
  CHECK_THROWS_AS(read_velocity<CompactField2d>(dir / "broken.json"), FormatError);
  std::ofstream(dir / "garbage.json") << "{ not json";
  CHECK_THROWS_AS(read_velocity<CompactField2d>(dir / "garbage.json"), FormatError);
}
