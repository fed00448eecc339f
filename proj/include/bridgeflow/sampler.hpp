#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bridgeflow/gauss_bridge.hpp"
#include "bridgeflow/linsys.hpp"

namespace bridgeflow {

/// Condition number of M(1,t) beyond which the pinned-bridge feedback is
/// refused outside the terminal clamp window.
inline constexpr double kPinnedConditionLimit = 1e14;

/// Sample paths on a shared uniform time grid; paths[p] is dim x (steps + 1).
struct PathEnsemble {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> paths;
  std::uint64_t seed = 0;
  double epsilon = 0.0;

  int n_paths() const { return static_cast<int>(paths.size()); }
  int steps() const { return static_cast<int>(times.size()) - 1; }
  int dim() const { return paths.empty() ? 0 : static_cast<int>(paths.front().rows()); }
};

struct EnsembleStats {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;  // unbiased
};

/// Seed of the independent substream for one path.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path_index);

/// Euler-Maruyama for dx = (A - BB'Pi)x dt + BB'm dt + sqrt(eps) B dw with
/// x(0) ~ s0. Between policy grid points Pi and m are cubic Hermite
/// interpolants, so step counts finer than the policy grid converge.
PathEnsemble simulate_gauss_bridge(const TransitionTable& tbl, const BridgePolicy& policy,
                                   const GaussianState& s0, double eps, int n_paths, int steps,
                                   std::uint64_t seed);

/// The prior conditioned on x(0) = x_p and x(1) = y_p for every pair (columns
/// of xs and ys), by Euler-Maruyama; the last two steps interpolate to y.
/// Throws SingularGuard if M(1,t) is too ill-conditioned before that window.
PathEnsemble simulate_pinned_bridges(const TransitionTable& tbl, const Eigen::MatrixXd& xs,
                                     const Eigen::MatrixXd& ys, double eps, int steps,
                                     std::uint64_t seed);

/// One pinned path, dim x (steps + 1).
Eigen::MatrixXd simulate_pinned_bridge(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y, double eps, int steps,
                                       std::uint64_t seed);

EnsembleStats ensemble_stats(const PathEnsemble& ens);

}  // namespace bridgeflow
