#include "bridgeflow/linsys.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/matrix_functions.hpp"

namespace bridgeflow {

MatrixFunction::MatrixFunction(std::vector<double> grid, std::vector<Eigen::MatrixXd> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorKind::InvalidArgument, "matrix function has no values");
  for (const auto& v : values_) {
    if (v.rows() != values_.front().rows() || v.cols() != values_.front().cols()) {
      throw Error(ErrorKind::InvalidArgument, "tabulated matrices differ in shape");
    }
    if (!v.allFinite()) throw Error(ErrorKind::NonFinite, "matrix function has non-finite entries");
  }
}

MatrixFunction MatrixFunction::constant(Eigen::MatrixXd value) {
  if (value.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty matrix");
  return MatrixFunction({}, {std::move(value)});
}

MatrixFunction MatrixFunction::tabulated(std::vector<double> grid,
                                         std::vector<Eigen::MatrixXd> values) {
  if (grid.size() < 2 || grid.size() != values.size()) {
    throw Error(ErrorKind::InvalidArgument, "tabulated grid/values size mismatch");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(ErrorKind::InvalidArgument, "tabulation grid must be strictly increasing");
    }
  }
  if (grid.front() > 0.0 || grid.back() < 1.0) {
    throw Error(ErrorKind::InvalidArgument, "tabulation grid must cover [0,1]");
  }
  return MatrixFunction(std::move(grid), std::move(values));
}

Eigen::MatrixXd MatrixFunction::operator()(double t) const {
  if (grid_.empty()) return values_.front();
  if (t <= grid_.front()) return values_.front();
  if (t >= grid_.back()) return values_.back();
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto hi = static_cast<std::size_t>(it - grid_.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - grid_[lo]) / (grid_[hi] - grid_[lo]);
  return (1.0 - w) * values_[lo] + w * values_[hi];
}

LinearSystem::LinearSystem(MatrixFunction a, MatrixFunction b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols()) throw Error(ErrorKind::InvalidArgument, "A must be square");
  if (b_.rows() != a_.rows()) {
    throw Error(ErrorKind::InvalidArgument, "B must have as many rows as A");
  }
}

LinearSystem LinearSystem::constant(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return LinearSystem(MatrixFunction::constant(a), MatrixFunction::constant(b));
}

Eigen::MatrixXd LinearSystem::BBt(double t) const {
  const Eigen::MatrixXd b = B(t);
  return b * b.transpose();
}

TransitionPair rk4_transition_step(const LinearSystem& sys, const TransitionPair& state, double t,
                                   double h) {
  auto deriv = [&sys](double tau, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd a = sys.A(tau);
    TransitionPair d;
    d.phi = a * phi;
    d.gramian = a * m + m * a.transpose() + sys.BBt(tau);
    return d;
  };
  const TransitionPair k1 = deriv(t, state.phi, state.gramian);
  const TransitionPair k2 =
      deriv(t + 0.5 * h, state.phi + 0.5 * h * k1.phi, state.gramian + 0.5 * h * k1.gramian);
  const TransitionPair k3 =
      deriv(t + 0.5 * h, state.phi + 0.5 * h * k2.phi, state.gramian + 0.5 * h * k2.gramian);
  const TransitionPair k4 = deriv(t + h, state.phi + h * k3.phi, state.gramian + h * k3.gramian);
  TransitionPair next;
  next.phi = state.phi + (h / 6.0) * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
  next.gramian = symmetrize(state.gramian + (h / 6.0) * (k1.gramian + 2.0 * k2.gramian +
                                                          2.0 * k3.gramian + k4.gramian));
  return next;
}

TransitionPair rk4_terminal_step(const LinearSystem& sys, const TransitionPair& state, double t,
                                 double h) {
  auto deriv = [&sys](double tau, const Eigen::MatrixXd& phi) {
    TransitionPair d;
    d.phi = -phi * sys.A(tau);
    d.gramian = -phi * sys.BBt(tau) * phi.transpose();
    return d;
  };
  const TransitionPair k1 = deriv(t, state.phi);
  const TransitionPair k2 = deriv(t + 0.5 * h, state.phi + 0.5 * h * k1.phi);
  const TransitionPair k3 = deriv(t + 0.5 * h, state.phi + 0.5 * h * k2.phi);
  const TransitionPair k4 = deriv(t + h, state.phi + h * k3.phi);
  TransitionPair next;
  next.phi = state.phi + (h / 6.0) * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
  next.gramian = symmetrize(state.gramian + (h / 6.0) * (k1.gramian + 2.0 * k2.gramian +
                                                          2.0 * k3.gramian + k4.gramian));
  return next;
}

TransitionTable::TransitionTable(LinearSystem sys, std::vector<double> grid,
                                 std::vector<Eigen::MatrixXd> phi,
                                 std::vector<Eigen::MatrixXd> gramian,
                                 std::vector<TransitionPair> terminal)
    : sys_(std::move(sys)), grid_(std::move(grid)), phi_(std::move(phi)),
      gramian_(std::move(gramian)), terminal_(std::move(terminal)) {
  lambda_min_ = min_eigenvalue(gramian_.back());
  if (!(lambda_min_ > kControllabilityTol)) {
    char msg[96];
    std::snprintf(msg, sizeof(msg), "lambda_min(M(1,0)) = %.6g <= %.6g", lambda_min_,
                  kControllabilityTol);
    throw Error(ErrorKind::NonControllable, msg);
  }
  m10_inv_ = symmetrize(gramian_.back().ldlt().solve(
      Eigen::MatrixXd::Identity(gramian_.back().rows(), gramian_.back().cols())));
}

TransitionTable TransitionTable::build(const LinearSystem& sys, int steps) {
  if (steps < 4) throw Error(ErrorKind::InvalidArgument, "steps must be >= 4");
  const int n = sys.dim_state();
  const double h = 1.0 / steps;
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) grid[k] = k * h;
  grid.back() = 1.0;

  std::vector<Eigen::MatrixXd> phi;
  std::vector<Eigen::MatrixXd> gramian;
  phi.reserve(grid.size());
  gramian.reserve(grid.size());
  TransitionPair state{Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n)};
  phi.push_back(state.phi);
  gramian.push_back(state.gramian);
  for (int k = 0; k < steps; ++k) {
    state = rk4_transition_step(sys, state, grid[k], h);
    if (!state.phi.allFinite() || !state.gramian.allFinite()) {
      throw Error(ErrorKind::NonFinite, "transition integration overflowed at t=" +
                                            std::to_string(grid[k + 1]));
    }
    phi.push_back(state.phi);
    gramian.push_back(state.gramian);
  }
  std::vector<TransitionPair> terminal(grid.size());
  terminal.back() = {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (int k = steps; k > 0; --k) {
    terminal[k - 1] = rk4_terminal_step(sys, terminal[k], grid[k], -h);
    if (!terminal[k - 1].phi.allFinite() || !terminal[k - 1].gramian.allFinite()) {
      throw Error(ErrorKind::NonFinite, "backward transition integration overflowed at t=" +
                                            std::to_string(grid[k - 1]));
    }
  }
  return TransitionTable(sys, std::move(grid), std::move(phi), std::move(gramian),
                         std::move(terminal));
}

int TransitionTable::grid_index(double t) const {
  const double pos = t * steps();
  const double k = std::round(pos);
  if (std::abs(pos - k) > 1e-9 || k < 0 || k > steps()) return -1;
  return static_cast<int>(k);
}

TransitionPair TransitionTable::from_origin(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "time " + std::to_string(t) + " outside [0,1]");
  }
  if (const int k = grid_index(t); k >= 0) return {phi_[k], gramian_[k]};
  const int k = std::clamp(static_cast<int>(std::floor(t * steps())), 0, steps() - 1);
  return rk4_transition_step(sys_, {phi_[k], gramian_[k]}, grid_[k], t - grid_[k]);
}

TransitionPair TransitionTable::between(double t, double s) const {
  if (s > t) throw Error(ErrorKind::OutOfRange, "between(t, s) requires s <= t");
  const TransitionPair at_t = from_origin(t);
  const TransitionPair at_s = from_origin(s);
  TransitionPair out;
  out.phi = at_s.phi.transpose().partialPivLu().solve(at_t.phi.transpose()).transpose();
  out.gramian = symmetrize(at_t.gramian - out.phi * at_s.gramian * out.phi.transpose());
  return out;
}

TransitionPair TransitionTable::to_terminal(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "time " + std::to_string(t) + " outside [0,1]");
  }
  if (const int k = grid_index(t); k >= 0) return terminal_[k];
  const int k = std::clamp(static_cast<int>(std::ceil(t * steps())), 1, steps());
  return rk4_terminal_step(sys_, terminal_[k], grid_[k], t - grid_[k]);
}

double min_energy_cost(const TransitionTable& tbl, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y) {
  const Eigen::VectorXd r = y - tbl.phi10() * x;
  return std::max(0.0, 0.5 * r.dot(tbl.m10_inverse() * r));
}

Eigen::VectorXd min_energy_path(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, double t) {
  const TransitionPair origin = tbl.from_origin(t);
  if (tbl.grid_index(t) == 0) return x;
  const TransitionPair terminal = tbl.to_terminal(t);
  // Phi(t,1) M(1,t) M10^{-1} Phi10 x = Phi(1,t)^{-1} M(1,t) M10^{-1} Phi10 x
  const Eigen::VectorXd free_part =
      terminal.phi.partialPivLu().solve(terminal.gramian * (tbl.m10_inverse() * (tbl.phi10() * x)));
  const Eigen::VectorXd steer_part =
      origin.gramian * (terminal.phi.transpose() * (tbl.m10_inverse() * y));
  return free_part + steer_part;
}

Eigen::VectorXd min_energy_control(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y, double t) {
  const TransitionPair terminal = tbl.to_terminal(t);
  const Eigen::VectorXd r = y - tbl.phi10() * x;
  return tbl.system().B(t).transpose() * (terminal.phi.transpose() * (tbl.m10_inverse() * r));
}

}  // namespace bridgeflow
