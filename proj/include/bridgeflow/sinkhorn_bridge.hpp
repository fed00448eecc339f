#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bridgeflow/grid_density.hpp"
#include "bridgeflow/linsys.hpp"

namespace bridgeflow {

/// log q^eps(s, x_i, t, y_j) for the prior process, stored row-major and
/// column-major so both scaling sweeps read contiguous memory.
struct KernelMatrix {
  Eigen::MatrixXd source;  // one point per row
  Eigen::MatrixXd target;
  double epsilon = 0.0;
  double s = 0.0;
  double t = 1.0;
  std::vector<double> log_q;    // rows() x cols(), row-major
  std::vector<double> log_q_t;  // cols() x rows(), row-major

  Eigen::Index rows() const { return source.rows(); }
  Eigen::Index cols() const { return target.rows(); }
  double log_entry(Eigen::Index i, Eigen::Index j) const { return log_q[i * cols() + j]; }
  double entry(Eigen::Index i, Eigen::Index j) const;
};

/// Gaussian transition kernel of dx = A x dt + sqrt(eps) B dw from time s
/// to time t. Throws InvalidArgument unless eps > 0 and s < t.
KernelMatrix build_kernel(const TransitionTable& tbl, double eps, const Eigen::MatrixXd& grid0,
                          const Eigen::MatrixXd& grid1, double s = 0.0, double t = 1.0);
KernelMatrix build_kernel(const TransitionTable& tbl, double eps, const std::vector<double>& grid0,
                          const std::vector<double>& grid1, double s = 0.0, double t = 1.0);

/// Heat kernel (2 pi (t-s) eps)^{-n/2} exp(-|y-x|^2 / (2 (t-s) eps)).
KernelMatrix brownian_kernel(double eps, const Eigen::MatrixXd& grid0, const Eigen::MatrixXd& grid1,
                             double s = 0.0, double t = 1.0);

/// Point masses with the cell volume that turns them into densities.
struct DiscreteMarginal {
  Eigen::MatrixXd points;  // one point per row
  Eigen::VectorXd mass;    // positive, sums to 1
  double cell_volume = 1.0;
};

/// Keeps the positive-weight cells of a grid density as a marginal.
DiscreteMarginal to_marginal(const GridDensity& rho);

struct SinkhornOptions {
  double tol = 1e-8;
  int max_iter = 100000;
  /// Record (iteration, residual) every this many iterations; 0 disables.
  int trace_every = 0;
  /// Starting log phi_1 (density form); defaults to phi_1 = 1.
  std::optional<Eigen::VectorXd> initial_log_phi_1;
};

/// Log-density potentials at the grid points; the coupling is
/// pi_ij = h0 h1 phi_hat_0(x_i) q(x_i, y_j) phi_1(y_j).
struct PotentialPair {
  Eigen::VectorXd log_phi_hat_0;
  Eigen::VectorXd log_phi_1;
  double epsilon = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<std::pair<int, double>> trace;
};

/// Alternating marginal fitting in the log domain until both L1 marginal
/// residuals are below tol. Throws NotConvergedError otherwise.
PotentialPair fortet_solve(const KernelMatrix& kernel, const DiscreteMarginal& mu0,
                           const DiscreteMarginal& mu1, const SinkhornOptions& options = {});

DiscreteCoupling coupling(const KernelMatrix& kernel, const PotentialPair& pair,
                          const DiscreteMarginal& mu0, const DiscreteMarginal& mu1);

/// L1 mismatch of the coupling's row and column sums.
std::pair<double, double> marginal_residuals(const DiscreteCoupling& pi, const DiscreteMarginal& mu0,
                                             const DiscreteMarginal& mu1);

/// A solved bridge between two marginals for one noise level.
struct BridgeSolution {
  DiscreteMarginal mu0;
  DiscreteMarginal mu1;
  KernelMatrix kernel;
  PotentialPair pair;
};

BridgeSolution solve_bridge(const TransitionTable& tbl, double eps, const GridDensity& rho0,
                            const GridDensity& rho1, const SinkhornOptions& options = {});

/// phi(t, x) phi_hat(t, x) on eval_points (1-D), normalized. t = 0 and t = 1
/// return the input marginals unchanged.
GridDensity entropic_interpolation(const TransitionTable& tbl, const BridgeSolution& sol, double t,
                                   const std::vector<double>& eval_points,
                                   const GridDensity& rho0, const GridDensity& rho1);

struct SweepOptions {
  SinkhornOptions solver;
  double t_star = 0.5;
  int eval_points = 1024;
  /// Start each solve from the previous potentials rescaled by eps_prev / eps.
  bool warm_start = true;
};

struct SweepRow {
  double epsilon = 0.0;
  /// sum_ij pi_ij |y_j - T(x_i)|: transport cost from the entropic coupling
  /// to the graph of the optimal map, an upper bound on their W1 distance.
  double coupling_distance = 0.0;
  /// W1 between the entropic and displacement interpolants at t_star.
  double flow_distance = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<double> eval_points;
  GridDensity omt_flow;                  // displacement interpolant at t_star
  std::vector<GridDensity> entropic_flows;  // one per epsilon
};

/// Solves the bridge for each eps (strictly decreasing, positive) and
/// measures the distance to the zero-noise transport solution. 1-D only.
SweepResult zero_noise_sweep(const TransitionTable& tbl, const GridDensity& rho0,
                             const GridDensity& rho1, const std::vector<double>& eps_list,
                             const SweepOptions& options = {});

/// True when each distance is at most (1 + slack) times its predecessor.
bool nonincreasing_with_slack(const std::vector<double>& values, double slack = 0.1);

struct TransformCheck {
  /// L1 distance between the transformed-potential coupling and the
  /// original coupling carried to the reduced coordinates.
  double pushforward_gap = 0.0;
  /// L1 distance between the transformed-potential coupling and a direct
  /// Brownian-kernel solve on the reduced marginals.
  double direct_gap = 0.0;
  double residual() const { return std::max(pushforward_gap, direct_gap); }
};

/// Maps a converged pair to reduced coordinates, where the prior becomes
/// Brownian motion, and compares the resulting coupling with both the
/// pushforward of the original and an independent Brownian solve.
TransformCheck potential_transform_check(const TransitionTable& tbl, const BridgeSolution& sol,
                                         const SinkhornOptions& options = {});

}  // namespace bridgeflow
