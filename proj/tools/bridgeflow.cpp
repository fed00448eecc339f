#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "bridgeflow/cli.hpp"

namespace cli = bridgeflow::cli;

int main(int argc, char** argv) {
  CLI::App app{"Schrodinger bridges and transport with linear prior dynamics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  cli::Overrides ov;
  int steps = 0, grid = 0, paths = -1;
  std::int64_t seed = -1;
  double tol = 0.0;

  const std::map<std::string, std::string> about{
      {"gramian", "tabulate Phi(t,0) and M(t,0)"},
      {"gauss-bridge", "Gaussian bridge moment flows for each epsilon"},
      {"omt1d", "1-D transport map, interpolated density and particles"},
      {"sinkhorn", "entropic couplings, potentials and interpolations"},
      {"sweep", "zero-noise sweep of couplings and flows"},
      {"sample-paths", "Monte-Carlo paths and per-time statistics"},
      {"check", "run the numerical self-checks for a config"},
  };
  for (const auto& name : cli::command_names()) {
    const auto it = about.find(name);
    CLI::App* sub = app.add_subcommand(name, it == about.end() ? "" : it->second);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--epsilon", ov.epsilon, "noise level; repeatable, replaces the config list");
    sub->add_option("--steps", steps, "RK4 steps on [0,1]")->check(CLI::PositiveNumber);
    sub->add_option("--grid", grid, "points for built-in densities")->check(CLI::PositiveNumber);
    sub->add_option("--paths", paths, "sample paths")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--tol", tol, "Sinkhorn L1 tolerance")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!out_dir.empty()) ov.out = out_dir;
  if (steps > 0) ov.steps = steps;
  if (grid > 0) ov.grid = grid;
  if (paths >= 0) ov.paths = paths;
  if (seed >= 0) ov.seed = static_cast<std::uint64_t>(seed);
  if (tol > 0.0) ov.tol = tol;

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const cli::ExperimentConfig cfg = cli::load_config(config_path, ov);
    const cli::CommandResult res = cli::run_command(command, cfg);
    for (const auto& line : res.lines) std::cout << line << '\n';
    for (const auto& f : res.files) std::cout << "wrote " << f.string() << '\n';
    return res.ok ? 0 : 1;
  } catch (const bridgeflow::Error& e) {
    std::cerr << e.what() << '\n';
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
