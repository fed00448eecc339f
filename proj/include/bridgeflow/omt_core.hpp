#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bridgeflow/gauss_bridge.hpp"
#include "bridgeflow/grid_density.hpp"
#include "bridgeflow/linsys.hpp"

namespace bridgeflow {

/// Samples (x_i, T(x_i)) of a 1-D transport map on a source grid.
struct TransportMap1D {
  std::vector<double> x;
  std::vector<double> tx;

  /// Linear interpolation between samples, constant beyond the ends.
  double operator()(double at) const;
  bool nondecreasing() const;
};

struct ReducedMarginals {
  GridDensity rho0_hat;
  GridDensity rho1_hat;
};

/// Moves 1-D marginals to the coordinates x_hat = M10^{-1/2} Phi10 x and
/// y_hat = M10^{-1/2} y, where the prior dynamics become free motion.
/// Both outputs are normalized.
ReducedMarginals reduce_marginals(const TransitionTable& tbl, const GridDensity& rho0,
                                  const GridDensity& rho1);

/// The same change of coordinates for Gaussian marginals in any dimension.
std::pair<GaussianState, GaussianState> reduce_gaussian(const TransitionTable& tbl,
                                                        const GaussianState& s0,
                                                        const GaussianState& s1);

/// Inverse of the piecewise-linear CDF through the cell edges. On a
/// zero-mass plateau the left end is returned.
double quantile(const GridDensity& rho, const std::vector<double>& edge_cdf, double u);

/// Monotone rearrangement F1^{-1} o F0 evaluated at the source cell centres.
TransportMap1D monotone_map_1d(const GridDensity& rho0_hat, const GridDensity& rho1_hat);

/// T(x) = M10^{1/2} T_hat(M10^{-1/2} Phi10 x), sampled on the original grid.
TransportMap1D lift_map(const TransitionTable& tbl, const TransportMap1D& t_hat);

/// Optimal map in the original coordinates, computed through the reduction.
TransportMap1D omt_map_1d(const TransitionTable& tbl, const GridDensity& rho0,
                          const GridDensity& rho1);

struct Interpolant {
  double t = 0.0;
  GridDensity density;
  std::vector<double> positions;
  std::vector<double> masses;
};

/// Deposits point masses onto a uniform grid by linear splitting between the
/// two nearest points. Mass beyond either end goes to the end point.
GridDensity deposit(const std::vector<double>& positions, const std::vector<double>& masses,
                    const std::vector<double>& eval_points);

/// Moves each source cell along its minimum-energy path to T(x) and re-bins
/// the particles at time t onto eval_points.
Interpolant displacement_interp(const TransitionTable& tbl, const TransportMap1D& map,
                                const GridDensity& rho0, double t,
                                const std::vector<double>& eval_points);

/// Quadratic prior-dynamics cost of moving rho0 by the map.
double transport_cost(const TransitionTable& tbl, const TransportMap1D& map,
                      const GridDensity& rho0);

/// Same cost under a coupling whose marginals must match rho0 and rho1 to 1e-6.
double transport_cost(const TransitionTable& tbl, const DiscreteCoupling& coupling,
                      const GridDensity& rho0, const GridDensity& rho1);

/// 1/2 sum m_i (T_hat(x_i) - x_i)^2 in reduced coordinates.
double hatted_transport_cost(const TransportMap1D& t_hat, const GridDensity& rho0_hat);

/// Scalar field samples psi(0, y) at arbitrary points.
struct ScalarFieldGrid {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> values;
};

/// min over the sample points y of psi0(y) + 1/2 (x - Phi(t,0) y)' M(t,0)^{-1} (x - Phi(t,0) y).
double hopf_lax_psi(const TransitionTable& tbl, const ScalarFieldGrid& psi0, double t,
                    const Eigen::VectorXd& x);

/// psi(t_k, x_j) for a 1-D state.
struct TabulatedPsi {
  std::vector<double> times;
  std::vector<double> xs;
  Eigen::MatrixXd values;  // rows follow times, columns follow xs
};

/// Max |psi_t + x A psi_x + 1/2 BB' psi_x^2| over interior nodes, with
/// central differences in both t and x.
double hj_residual_grid(const TransitionTable& tbl, const TabulatedPsi& psi);

}  // namespace bridgeflow
