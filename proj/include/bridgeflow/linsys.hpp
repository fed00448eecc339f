#pragma once

#include <vector>

#include <Eigen/Dense>

namespace bridgeflow {

/// Threshold on the smallest eigenvalue of M(1,0) below which the system is
/// treated as not controllable.
inline constexpr double kControllabilityTol = 1e-10;

inline constexpr int kDefaultSteps = 200;

/// A matrix-valued function on [0,1]: either constant or tabulated on a grid
/// with piecewise-linear interpolation.
class MatrixFunction {
 public:
  static MatrixFunction constant(Eigen::MatrixXd value);
  /// `grid` must be strictly increasing and cover [0,1].
  static MatrixFunction tabulated(std::vector<double> grid, std::vector<Eigen::MatrixXd> values);

  Eigen::MatrixXd operator()(double t) const;

  Eigen::Index rows() const { return values_.front().rows(); }
  Eigen::Index cols() const { return values_.front().cols(); }
  bool is_constant() const { return grid_.empty(); }
  const std::vector<double>& knots() const { return grid_; }
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }

 private:
  MatrixFunction(std::vector<double> grid, std::vector<Eigen::MatrixXd> values);

  std::vector<double> grid_;
  std::vector<Eigen::MatrixXd> values_;
};

/// Linear time-varying dynamics dx = A(t)x dt + B(t)u dt on t in [0,1].
class LinearSystem {
 public:
  LinearSystem(MatrixFunction a, MatrixFunction b);

  static LinearSystem constant(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

  int dim_state() const { return static_cast<int>(a_.rows()); }
  int dim_input() const { return static_cast<int>(b_.cols()); }

  Eigen::MatrixXd A(double t) const { return a_(t); }
  Eigen::MatrixXd B(double t) const { return b_(t); }
  /// a(t) = B(t)B(t)'
  Eigen::MatrixXd BBt(double t) const;

  const MatrixFunction& a_function() const { return a_; }
  const MatrixFunction& b_function() const { return b_; }

 private:
  MatrixFunction a_;
  MatrixFunction b_;
};

/// State transition matrix and controllability Gramian at one time.
struct TransitionPair {
  Eigen::MatrixXd phi;      ///< Phi(t, s)
  Eigen::MatrixXd gramian;  ///< M(t, s)
};

/// Phi(t,0) and M(t,0) sampled on a uniform grid over [0,1], integrated jointly
/// with fixed-step RK4. Values at off-grid times are obtained by a single RK4
/// sub-step from the preceding grid point, so they carry the same accuracy as
/// the tabulated ones. Phi(1,t) and M(1,t) are integrated separately,
/// backward from t = 1, so M(1,t) keeps its relative accuracy as t -> 1.
class TransitionTable {
 public:
  /// Throws NonControllable if lambda_min(M(1,0)) <= kControllabilityTol and
  /// NonFinite if the integration overflows.
  static TransitionTable build(const LinearSystem& sys, int steps = kDefaultSteps);

  const LinearSystem& system() const { return sys_; }
  int dim() const { return sys_.dim_state(); }
  int steps() const { return static_cast<int>(grid_.size()) - 1; }
  double dt() const { return 1.0 / steps(); }
  const std::vector<double>& grid() const { return grid_; }
  const Eigen::MatrixXd& phi(int k) const { return phi_[k]; }
  const Eigen::MatrixXd& gramian(int k) const { return gramian_[k]; }
  const Eigen::MatrixXd& phi10() const { return phi_.back(); }
  const Eigen::MatrixXd& m10() const { return gramian_.back(); }
  const Eigen::MatrixXd& m10_inverse() const { return m10_inv_; }
  double lambda_min_m10() const { return lambda_min_; }

  /// Phi(t,0), M(t,0). Throws OutOfRange outside [0,1].
  TransitionPair from_origin(double t) const;
  /// Phi(t,s), M(t,s) for s <= t, via M(t,s) = M(t,0) - Phi(t,s) M(s,0) Phi(t,s)'.
  TransitionPair between(double t, double s) const;
  /// Phi(1,t) and M(1,t) from the backward table.
  TransitionPair to_terminal(double t) const;

  /// Grid index k with grid()[k] == t (within 1e-12), or -1.
  int grid_index(double t) const;

 private:
  TransitionTable(LinearSystem sys, std::vector<double> grid, std::vector<Eigen::MatrixXd> phi,
                  std::vector<Eigen::MatrixXd> gramian, std::vector<TransitionPair> terminal);

  LinearSystem sys_;
  std::vector<double> grid_;
  std::vector<Eigen::MatrixXd> phi_;
  std::vector<Eigen::MatrixXd> gramian_;
  std::vector<TransitionPair> terminal_;
  Eigen::MatrixXd m10_inv_;
  double lambda_min_ = 0.0;
};

/// One RK4 step of the joint (Phi, M) system from time t over h.
TransitionPair rk4_transition_step(const LinearSystem& sys, const TransitionPair& state, double t,
                                   double h);

/// One RK4 step of (Phi(1,t), M(1,t)) from time t over h (h < 0 moves
/// toward 0): d/dt Phi(1,t) = -Phi(1,t) A(t), d/dt M(1,t) = -Phi(1,t) BB' Phi(1,t)'.
TransitionPair rk4_terminal_step(const LinearSystem& sys, const TransitionPair& state, double t,
                                 double h);

/// 1/2 (y - Phi10 x)' M10^{-1} (y - Phi10 x)
double min_energy_cost(const TransitionTable& tbl, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y);

/// Optimal trajectory x(t) between x(0)=x and x(1)=y.
Eigen::VectorXd min_energy_path(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, double t);

/// Open-loop optimal control u(t) = B(t)' Phi(1,t)' M10^{-1} (y - Phi10 x).
Eigen::VectorXd min_energy_control(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y, double t);

}  // namespace bridgeflow
