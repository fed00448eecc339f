#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bridgeflow/linsys.hpp"

namespace bridgeflow {

inline constexpr double kRiccatiBlowUp = 1e12;
inline constexpr double kExplicitConditionLimit = 1e12;

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  /// Throws InvalidArgument on shape mismatch or a covariance that is not
  /// symmetric positive definite. Singular covariances are rejected.
  void validate(int dim) const;
};

/// Riccati flow Pi_eps(t_k), closed-loop transition Phi_hat(t_k,0) of
/// A - BB'Pi, its Gramian M_hat(t_k,0), and (after affine_drift) the drift
/// m(t_k) and the scalar c(t_k) of the quadratic value function.
struct BridgePolicy {
  double epsilon = 0.0;
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> pi_flow;
  std::vector<Eigen::MatrixXd> phi_hat;
  std::vector<Eigen::MatrixXd> m_hat;
  /// Phi_hat(t,0)^{-1} and int_0^t Phi_hat(s,0)^{-1} BB' Phi_hat(s,0)^{-T} ds,
  /// which give m(t) and c(t) without a separate quadrature.
  std::vector<Eigen::MatrixXd> phi_hat_inv;
  std::vector<Eigen::MatrixXd> drift_gramian;
  Eigen::MatrixXd m_hat_10;
  std::vector<Eigen::VectorXd> m_flow;
  std::vector<double> c_flow;

  int steps() const { return static_cast<int>(grid.size()) - 1; }
  /// Linear interpolation between grid points.
  Eigen::MatrixXd pi_at(double t) const;
  Eigen::VectorXd m_at(double t) const;
};

struct MomentFlow {
  std::vector<double> grid;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;
};

/// Pi_eps(0) from the boundary formula; eps = 0 gives the transport limit.
Eigen::MatrixXd initial_riccati(const TransitionTable& tbl, double eps, const GaussianState& s0,
                                const GaussianState& s1);

/// Integrates dPi/dt = -A'Pi - Pi A + Pi BB' Pi forward from pi0 on the table
/// grid together with the closed-loop transition and Gramian. Throws BlowUp
/// on finite escape.
BridgePolicy riccati_flow(const TransitionTable& tbl, const Eigen::MatrixXd& pi0,
                          double eps = 0.0);

/// Closed-form Pi_0(t) for t in (0,1].
Eigen::MatrixXd pi_zero_explicit(const TransitionTable& tbl, const GaussianState& s0,
                                 const GaussianState& s1, double t);

/// Fills policy.m_flow and policy.c_flow and returns m_flow.
const std::vector<Eigen::VectorXd>& affine_drift(const TransitionTable& tbl, BridgePolicy& policy,
                                                 const Eigen::VectorXd& m0,
                                                 const Eigen::VectorXd& m1);

/// Initial Riccati value, flow and drift in one call.
BridgePolicy solve_gaussian_bridge(const TransitionTable& tbl, double eps, const GaussianState& s0,
                                   const GaussianState& s1);

/// Covariance under dSigma = (A - BB'Pi)Sigma + Sigma(A - BB'Pi)' + eps BB',
/// integrated with RK4 jointly with the Riccati flow from pi0.
std::vector<Eigen::MatrixXd> lyapunov_covariance_flow(const TransitionTable& tbl,
                                                      const Eigen::MatrixXd& pi0,
                                                      const Eigen::MatrixXd& sigma0, double eps);

/// Mean and covariance of the bridge on the policy grid. For eps = 0 the
/// covariance uses the closed-form expression, otherwise the Lyapunov flow.
MomentFlow moment_flow(const TransitionTable& tbl, const BridgePolicy& policy,
                       const GaussianState& s0, const GaussianState& s1);

/// u(t,x) = -B(t)'Pi(t)x + B(t)'m(t).
Eigen::VectorXd feedback_control(const TransitionTable& tbl, const BridgePolicy& policy, double t,
                                 const Eigen::VectorXd& x);

/// psi(t_k, x) = -1/2 x'Pi x + m'x + c.
double value_function(const BridgePolicy& policy, int k, const Eigen::VectorXd& x);

struct HjProbe {
  std::vector<int> time_indices;
  std::vector<Eigen::VectorXd> points;
};

/// `n_times` grid-aligned interior times (at least two grid steps from either
/// end) and a tensor grid of `n_per_dim` points per state dimension on [lo,hi].
HjProbe make_hj_probe(const BridgePolicy& policy, int n_times, double lo, double hi, int n_per_dim);

/// Max |d psi/dt + x'A'grad psi + 1/2 grad psi' BB' grad psi| over the probe.
/// The time derivative is a central difference on the policy grid (five-point
/// where the stencil fits, three-point otherwise); the gradient is exact.
double hj_residual_gaussian(const TransitionTable& tbl, const BridgePolicy& policy,
                            const HjProbe& probe);

}  // namespace bridgeflow
