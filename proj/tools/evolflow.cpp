#include "evolflow/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  using namespace evolflow;
  CLI::App app{"Evolution of time-dependent vector fields into flows of diffeomorphisms"};
  std::string command;
  std::string config;
  std::string out = "out";
  int threads = 1;
  std::uint64_t seed = 0;
  bool render = false;
  bool verbose = false;

  std::ostringstream names;
  for (const auto& n : command_names()) names << (names.tellp() > 0 ? ", " : "") << n;
  app.add_option("command", command, "One of: " + names.str())
      ->required()
      ->check(CLI::IsMember(command_names()));
  app.add_option("--config", config, "JSON configuration file")->required();
  app.add_option("--out", out, "Output directory");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  app.add_flag("--render", render, "Write an SVG of the deformed grid");
  app.add_flag("--verbose", verbose, "Report progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  RunOptions options;
  options.config = config;
  options.out = out;
  options.threads = threads;
  if (seed_opt->count() > 0) options.seed = seed;
  options.render = render;
  options.verbose = verbose;
  return run_command(command, options, verbose ? std::cerr : std::cout);
}
