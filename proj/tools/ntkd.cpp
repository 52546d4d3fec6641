// Experiment runner for the shortcut-network depth kernel library.
//
//   ntkd run <spec.json> [--jobs N] [--seed S]
//
// Runs the experiment described by the JSON spec and writes results.csv,
// summary.json and spec_echo.json into the spec's output_dir.  Relative
// dataset paths resolve against $NTKD_DATA_DIR.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ntkd/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"shortcut-network depth-kernel experiment runner"};
  app.require_subcommand(1);

  std::string spec_path;
  int jobs = -1;
  std::optional<std::uint64_t> seed;

  CLI::App* run = app.add_subcommand("run", "run an experiment spec");
  run->add_option("spec", spec_path, "path to the experiment spec JSON")->required();
  run->add_option("--jobs", jobs, "parallel trial workers (default: spec value)");
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt =
      run->add_option("--seed", seed_value, "override the spec's base seed");

  CLI11_PARSE(app, argc, argv);

  if (*seed_opt) seed = seed_value;
  return ntkd::run_experiment_file(spec_path, jobs, seed, &std::cout);
}
