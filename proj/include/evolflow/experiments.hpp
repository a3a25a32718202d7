#pragma once

// Configuration-driven experiments behind the evolflow command line tool.

#include "evolflow/instances.hpp"
#include "evolflow/io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace evolflow {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitSolver = 2, kExitCheck = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out = "out";
  int threads = 1;
  std::optional<std::uint64_t> seed;
  bool render = false;
  bool verbose = false;
};

/// Outcome of one checked property.
struct PropertyReport {
  std::string name;
  bool passed = false;
  Index cases = 0;
  /// Worst observed value of the checked quantity (ratio, error or defect).
  double worst = 0;
  double threshold = 0;
  std::string detail;
};

const std::vector<std::string>& command_names();

/// Loads and validates a configuration for `command`; throws ConfigError.
json load_config(const std::filesystem::path& path, const std::string& command);

/// Runs one command and returns the process exit code. Never throws.
int run_command(const std::string& command, const RunOptions& options, std::ostream& log);

/// The property batteries of property-check, also used by the acceptance suite.
/// `spec` is the property's configuration block; CSV rows go to `out` when non-empty.
PropertyReport check_contraction(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_oracle(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_closed_form(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_subdivision(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_composition(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_group(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_budget(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_charts(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});
PropertyReport check_ac_space(const json& spec, std::uint64_t seed, const std::filesystem::path& out = {});

/// Decimal text that round-trips a double; used for every CSV number.
std::string format_number(double v);

}  // namespace evolflow
