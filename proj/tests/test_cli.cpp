#include "evolflow/experiments.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace evolflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evolflow_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(EVOLFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(slurp(p));
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("argument handling") {
  const auto dir = scratch("args");
  CHECK(run_tool("") == kExitConfig);
  CHECK(run_tool("bogus --config x.json") == kExitConfig);
  CHECK(run_tool("evolve") == kExitConfig);
  CHECK(run_tool("evolve --config " + (dir / "missing.json").string() + " --out " + dir.string()) == kExitConfig);
  write(dir / "c.json", {{"velocity", {{"kind", "zero"}}}, {"unexpected", 1}});
  CHECK(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitConfig);
  write(dir / "c.json", {{"command", "torus-evolve"}, {"velocity", {{"kind", "zero"}}}});
  CHECK(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitConfig);
  write(dir / "c.json", {{"velocity", {{"kind", "zero"}}}, {"solver", {{"l_max", 1.5}}}});
  CHECK(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitConfig);
  write(dir / "c.json", {{"velocity", {{"kind", "zero"}}}});
  CHECK(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string() + " --threads 0") == kExitConfig);
}

TEST_CASE("evolving the zero velocity from a manifest") {
  const auto dir = scratch("zero");
  const auto g = square_geometry(1.0, 16);
  write_velocity(dir / "zero_velocity.json", Velocity2d::zero(TimeGrid<double>::uniform(0, 1, 2), g, 1.0));
  write(dir / "c.json", {{"command", "evolve"}, {"velocity", {{"manifest", "zero_velocity.json"}}}, {"points", 3}});
  REQUIRE(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + (dir / "out").string() + " --render") == kExitOk);
  const auto r = read_evolution<CompactField2d>(dir / "out" / "evolution.json");
  CHECK(r.residual == 0.0);
  CHECK(r.path.back().is_zero());
  CHECK(fs::exists(dir / "out" / "deformed_grid.svg"));
  const auto flow = read_csv(dir / "out" / "flow.csv");
  REQUIRE(flow.size() == 4);
  CHECK(flow[0][0] == "point");
  for (std::size_t i = 1; i < flow.size(); ++i) CHECK(flow[i][1] == flow[i][3]);
}

TEST_CASE("CSV conventions") {
  const auto dir = scratch("csv");
  write(dir / "c.json", {{"velocity", {{"kind", "random"}, {"grid_cells", 16}, {"l1", 0.3}}}, {"points", 5}, {"seed", 3}});
  REQUIRE(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitOk);
  const std::string text = slurp(dir / "flow.csv");
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.back() == '\n');
  const auto rows = read_csv(dir / "flow.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].size() == rows[0].size());
    for (const auto& cell : rows[i]) {
      std::size_t used = 0;
      std::stod(cell, &used);
      CHECK(used == cell.size());
    }
  }
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("subdivision study on a constant-alpha velocity") {
  const auto dir = scratch("subdivision");
  std::ostringstream log;
  RunOptions o;
  o.config = fs::path(EVOLFLOW_CONFIGS) / "subdivision_constant_alpha.json";
  o.out = dir;
  REQUIRE(run_command("subdivision-study", o, log) == kExitOk);
  const auto rows = read_csv(dir / "subdivision.csv");
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double mx = std::stod(rows[i][1]);
    const double expect = std::stod(rows[i][2]);
    CHECK(std::abs(mx - expect) <= 1e-12 * expect);
  }
}

TEST_CASE("continuity study writes one row per level") {
  const auto dir = scratch("continuity");
  write(dir / "c.json", {{"velocity", {{"kind", "random"}, {"grid_cells", 16}, {"time_cells", 2}, {"l1", 0.4}}},
                         {"delta", {{"kind", "random"}, {"grid_cells", 16}, {"l1", 0.02}}},
                         {"levels", 6},
                         {"checks", {{"final_distance", 1e-3}}}});
  REQUIRE(run_tool("continuity-study --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitOk);
  const auto rows = read_csv(dir / "continuity.csv");
  REQUIRE(rows.size() == 7);
  CHECK(std::stod(rows.back()[2]) < 1e-3);
}

TEST_CASE("failed checks and solver failures") {
  const auto dir = scratch("failures");
  write(dir / "c.json", {{"velocity", {{"kind", "random"}, {"grid_cells", 16}, {"l1", 0.3}}},
                         {"points", 3},
                         {"checks", {{"oracle_tolerance", 1e-300}}}});
  CHECK(run_tool("evolve --config " + (dir / "c.json").string() + " --out " + dir.string()) == kExitCheck);

  write(dir / "s.json", {{"velocity", {{"kind", "random"}, {"grid_cells", 16}, {"l1", 2.0}}}, {"solver", {{"max_segments", 2}}}});
  CHECK(run_tool("evolve --config " + (dir / "s.json").string() + " --out " + (dir / "s").string()) == kExitSolver);
  const auto diag = read_json_file(dir / "s" / "diagnostics.json");
  CHECK(diag.at("command") == "evolve");
  CHECK(diag.at("error").get<std::string>().find("subdivision") != std::string::npos);
}

TEST_CASE("torus command and property checks") {
  const auto dir = scratch("torus");
  write(dir / "t.json", {{"velocity", {{"kind", "constant"}, {"grid_cells", 8}, {"v", {0.25, -0.5}}}},
                         {"points", 4},
                         {"checks", {{"oracle_tolerance", 1e-10}}}});
  CHECK(run_tool("torus-evolve --config " + (dir / "t.json").string() + " --out " + dir.string()) == kExitOk);

  write(dir / "p.json", {{"properties", {{"budget", {{"instances", 1}}}, {"charts", {{"instances", 2}}}}}});
  CHECK(run_tool("property-check --config " + (dir / "p.json").string() + " --out " + dir.string() + " --seed 11") == kExitOk);
  CHECK(fs::exists(dir / "property_budget.csv"));
  CHECK(fs::exists(dir / "property_charts.csv"));
  CHECK(read_csv(dir / "checks.csv").size() == 3);
  write(dir / "q.json", {{"properties", {{"nonsense", json::object()}}}});
  CHECK(run_tool("property-check --config " + (dir / "q.json").string() + " --out " + dir.string()) == kExitConfig);
}

TEST_CASE("thread count does not change the output") {
  const auto a = scratch("threads1");
  const auto b = scratch("threads4");
  write(a / "c.json", {{"velocity", {{"kind", "random"}, {"grid_cells", 16}, {"time_cells", 2}, {"l1", 0.9}}}, {"points", 10}});
  REQUIRE(run_tool("evolve --config " + (a / "c.json").string() + " --out " + a.string() + " --threads 1") == kExitOk);
  REQUIRE(run_tool("evolve --config " + (a / "c.json").string() + " --out " + b.string() + " --threads 4") == kExitOk);
  CHECK(slurp(a / "flow.csv") == slurp(b / "flow.csv"));
  CHECK(slurp(a / "segments.csv") == slurp(b / "segments.csv"));
}
