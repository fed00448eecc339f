#pragma once

// Library side of the bridgeflow command-line tool: config loading, CSV
// output and the subcommands. The executable in tools/ only parses flags.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/gauss_bridge.hpp"
#include "bridgeflow/grid_density.hpp"
#include "bridgeflow/linsys.hpp"

namespace bridgeflow::cli {

struct GaussianMarginals {
  GaussianState initial;
  GaussianState final;
};

struct GridMarginals {
  GridDensity initial;
  GridDensity final;
};

struct ExperimentConfig {
  std::filesystem::path source;  // config file, for messages
  std::filesystem::path output_dir;
  std::optional<LinearSystem> system;
  std::optional<GaussianMarginals> gaussian;
  std::optional<GridMarginals> grid1d;
  std::vector<double> epsilon;
  int steps = kDefaultSteps;
  int grid = 256;
  int paths = 0;
  int sample_steps = 1000;
  int eval_points = 1024;
  std::uint64_t seed = 42;
  double tol = 1e-8;
  double t_star = 0.5;
  std::vector<double> times;  // interpolation snapshots
};

/// Command-line values that replace the corresponding config entries.
struct Overrides {
  std::optional<std::filesystem::path> out;
  std::vector<double> epsilon;
  std::optional<int> steps;
  std::optional<int> grid;
  std::optional<int> paths;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

/// Parses JSON config text. Relative paths resolve against base_dir. Syntax
/// errors carry line and column; schema errors carry the JSON pointer of the
/// offending entry. Both raise ErrorKind::Config.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const Overrides& overrides = {},
                              const std::string& source_name = "config");
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Process exit code for a failure kind: 2 for config and validation
/// problems (including NonControllable), 1 for numerical failures.
int exit_code(ErrorKind kind);

/// 17 significant digits, shortest form that round-trips.
std::string format_double(double v);
/// Short file-name tag for an epsilon value, e.g. "eps_0.01".
std::string epsilon_tag(double eps);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::filesystem::path path_;
};

/// Reads a two-column "x,rho" CSV (header required) into a grid density.
GridDensity read_density_csv(const std::filesystem::path& path);

struct CommandResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> lines;  // human-readable report
  bool ok = true;                  // false when a check failed
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gramian", "gauss-bridge", "omt1d", "sinkhorn",
                                              "sweep",   "sample-paths", "check"};
  return names;
}

/// Runs one subcommand, writing its CSV files under cfg.output_dir.
CommandResult run_command(const std::string& name, const ExperimentConfig& cfg);

}  // namespace bridgeflow::cli
