#include <iostream>

#include "CLI11.hpp"
#include "bellsim/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bellsim: per-observer probability ledgers for simulated Bell experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out = "bellsim-out";
  bellsim::RunOptions opts;
  std::uint64_t seed = 0;
  std::uint64_t trials = 0;
  int verbose = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run an experiment and write reports");
  run->add_option("-c,--config", config, "Experiment config (JSON)")->required();
  run->add_option("-o,--out", out, "Output directory")->capture_default_str();
  auto* seed_opt = run->add_option("--seed", seed, "Override the master seed");
  auto* trials_opt = run->add_option("-n,--trials", trials, "Override trials per setting pair");
  run->add_flag("-v,--verbose", verbose, "More output (repeatable)");
  run->add_flag("-q,--quiet", quiet, "Only report errors");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("-c,--config", config, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(bellsim::ExitCode::config_error);
  }

  if (*validate) return static_cast<int>(bellsim::validate_file(config, std::cerr));

  if (*seed_opt) opts.seed = seed;
  if (*trials_opt) opts.trials_per_pair = trials;
  opts.verbosity = quiet ? 0 : 1 + verbose;
  return static_cast<int>(bellsim::run_from_file(config, out, opts, std::cerr));
}
