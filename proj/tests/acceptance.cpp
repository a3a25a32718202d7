// Acceptance suite: one PASS/FAIL line per criterion.

#include "evolflow/experiments.hpp"
#include "evolflow/parallel.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace evolflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string describe(const PropertyReport& r) {
  std::ostringstream os;
  os << r.name << " worst " << format_number(r.worst) << " vs " << format_number(r.threshold) << " over " << r.cases
     << " cases";
  if (!r.detail.empty()) os << " [" << r.detail << "]";
  return os.str();
}

Outcome from_reports(const std::vector<PropertyReport>& reports) {
  Outcome o{true, ""};
  for (const auto& r : reports) {
    o.passed = o.passed && r.passed;
    o.detail += (o.detail.empty() ? "" : "; ") + describe(r);
  }
  return o;
}

}  // namespace

int main() {
  const fs::path configs = EVOLFLOW_CONFIGS;
  const json full = read_json_file(configs / "properties_full.json");
  const std::uint64_t seed = full.at("seed").get<std::uint64_t>();
  const json& props = full.at("properties");
  const fs::path work = fs::temp_directory_path() / "evolflow_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // Criteria 2 and 7 are run through the command layer twice (1 and 8 threads) so
  // that criterion 10 can compare their CSV files.
  json oracle_cfg = {{"command", "property-check"}, {"seed", seed}, {"properties", {{"oracle", props.at("oracle")}}}};
  std::ofstream(work / "oracle.json") << oracle_cfg.dump(2);
  auto run_cli = [&](const std::string& command, const fs::path& config, const fs::path& out, int threads) {
    RunOptions o;
    o.config = config;
    o.out = out;
    o.threads = threads;
    std::ostringstream log;
    const int code = run_command(command, o, log);
    return std::make_pair(code, log.str());
  };

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"contraction inequality", [&] { return from_reports({check_contraction(props.at("contraction"), seed)}); }},
      {"oracle equivalence",
       [&] {
         const auto [code, log] = run_cli("property-check", work / "oracle.json", work / "oracle_t1", 1);
         return Outcome{code == kExitOk, log.substr(0, log.find('\n'))};
       }},
      {"closed-form flows", [&] { return from_reports({check_closed_form(props.at("closed_form"), seed)}); }},
      {"subdivision consistency and composition law",
       [&] {
         return from_reports({check_subdivision(props.at("subdivision"), seed), check_composition(props.at("composition"), seed)});
       }},
      {"group axioms", [&] { return from_reports({check_group(props.at("group"), seed)}); }},
      {"subdivision decay", [&] { return from_reports({check_budget(props.at("budget"), seed)}); }},
      {"continuity of the evolution map",
       [&] {
         const auto [code, log] = run_cli("continuity-study", configs / "continuity_reference.json", work / "cont_t1", 1);
         std::string detail = log;
         std::replace(detail.begin(), detail.end(), '\n', ' ');
         return Outcome{code == kExitOk, detail};
       }},
      {"chart calculus", [&] { return from_reports({check_charts(props.at("charts"), seed)}); }},
      {"AC-space identities", [&] { return from_reports({check_ac_space(props.at("ac_space"), seed)}); }},
      {"determinism across thread counts",
       [&] {
         const auto a = run_cli("property-check", work / "oracle.json", work / "oracle_t8", 8);
         const auto b = run_cli("continuity-study", configs / "continuity_reference.json", work / "cont_t8", 8);
         const bool same_oracle = fs::exists(work / "oracle_t1" / "property_oracle.csv") &&
                                  slurp(work / "oracle_t1" / "property_oracle.csv") == slurp(work / "oracle_t8" / "property_oracle.csv");
         const bool same_cont = fs::exists(work / "cont_t1" / "continuity.csv") &&
                                slurp(work / "cont_t1" / "continuity.csv") == slurp(work / "cont_t8" / "continuity.csv");
         std::ostringstream d;
         d << "oracle CSV " << (same_oracle ? "identical" : "differs") << ", continuity CSV "
           << (same_cont ? "identical" : "differs") << " (exit codes " << a.first << ", " << b.first << ")";
         return Outcome{same_oracle && same_cont, d.str()};
       }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.passed) ++failures;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first << "): " << o.detail
              << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
