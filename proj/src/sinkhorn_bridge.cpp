#include "bridgeflow/sinkhorn_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/matrix_functions.hpp"
#include "bridgeflow/omt_core.hpp"
#include "bridgeflow/simd.hpp"

namespace bridgeflow {

namespace {

Eigen::MatrixXd as_column(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_kernel_args(double eps, double s, double t) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "kernel needs eps > 0");
  if (!(s < t)) throw Error(ErrorKind::InvalidArgument, "kernel needs s < t");
}

// Fills log_q from whitened points: log_q(i, j) = offset - |y_j - x_i|^2 / (2 eps).
void fill_kernel(KernelMatrix& k, const Eigen::MatrixXd& x_white, const Eigen::MatrixXd& y_white,
                 double offset) {
  const Eigen::Index n0 = k.rows();
  const Eigen::Index n1 = k.cols();
  k.log_q.resize(static_cast<std::size_t>(n0 * n1));
  k.log_q_t.resize(k.log_q.size());
  const double inv = 0.5 / k.epsilon;
  for (Eigen::Index i = 0; i < n0; ++i) {
    for (Eigen::Index j = 0; j < n1; ++j) {
      const double d2 = (y_white.row(j) - x_white.row(i)).squaredNorm();
      const double v = offset - inv * d2;
      k.log_q[i * n1 + j] = v;
      k.log_q_t[j * n0 + i] = v;
    }
  }
}

double l1_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().sum();
}

}  // namespace

double KernelMatrix::entry(Eigen::Index i, Eigen::Index j) const {
  return std::exp(log_entry(i, j));
}

KernelMatrix build_kernel(const TransitionTable& tbl, double eps, const Eigen::MatrixXd& grid0,
                          const Eigen::MatrixXd& grid1, double s, double t) {
  require_kernel_args(eps, s, t);
  const int n = tbl.dim();
  if (grid0.cols() != n || grid1.cols() != n) {
    throw Error(ErrorKind::InvalidArgument, "kernel grid dimension does not match the system");
  }
  const TransitionPair tr = tbl.between(t, s);
  const Eigen::LLT<Eigen::MatrixXd> llt(tr.gramian);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NonControllable, "M(t,s) is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (int d = 0; d < n; ++d) log_det += 2.0 * std::log(l(d, d));
  // Whitening by L^{-1}: (y - Phi x)' M^{-1} (y - Phi x) = |L^{-1} y - L^{-1} Phi x|^2.
  const Eigen::MatrixXd x_white =
      l.triangularView<Eigen::Lower>().solve((grid0 * tr.phi.transpose()).transpose()).transpose();
  const Eigen::MatrixXd y_white =
      l.triangularView<Eigen::Lower>().solve(grid1.transpose()).transpose();

  KernelMatrix k;
  k.source = grid0;
  k.target = grid1;
  k.epsilon = eps;
  k.s = s;
  k.t = t;
  fill_kernel(k, x_white, y_white,
              -0.5 * n * std::log(2.0 * std::numbers::pi * eps) - 0.5 * log_det);
  return k;
}

KernelMatrix build_kernel(const TransitionTable& tbl, double eps, const std::vector<double>& grid0,
                          const std::vector<double>& grid1, double s, double t) {
  return build_kernel(tbl, eps, as_column(grid0), as_column(grid1), s, t);
}

KernelMatrix brownian_kernel(double eps, const Eigen::MatrixXd& grid0, const Eigen::MatrixXd& grid1,
                             double s, double t) {
  require_kernel_args(eps, s, t);
  if (grid0.cols() != grid1.cols()) {
    throw Error(ErrorKind::InvalidArgument, "kernel grids differ in dimension");
  }
  const auto n = static_cast<double>(grid0.cols());
  KernelMatrix k;
  k.source = grid0;
  k.target = grid1;
  k.epsilon = eps;
  k.s = s;
  k.t = t;
  const double scale = 1.0 / std::sqrt(t - s);
  fill_kernel(k, grid0 * scale, grid1 * scale,
              -0.5 * n * std::log(2.0 * std::numbers::pi * (t - s) * eps));
  return k;
}

DiscreteMarginal to_marginal(const GridDensity& rho) {
  const GridDensity norm = rho.normalized();
  const double h = norm.spacing();
  std::vector<double> pts;
  std::vector<double> mass;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm.weights[i] > 0.0) {
      pts.push_back(norm.points[i]);
      mass.push_back(norm.weights[i] * h);
    }
  }
  DiscreteMarginal mu;
  mu.points = as_column(pts);
  mu.mass = as_column(mass);
  mu.mass /= mu.mass.sum();
  mu.cell_volume = h;
  return mu;
}

PotentialPair fortet_solve(const KernelMatrix& kernel, const DiscreteMarginal& mu0,
                           const DiscreteMarginal& mu1, const SinkhornOptions& options) {
  const Eigen::Index n0 = kernel.rows();
  const Eigen::Index n1 = kernel.cols();
  if (mu0.mass.size() != n0 || mu1.mass.size() != n1) {
    throw Error(ErrorKind::InvalidArgument, "marginal sizes do not match the kernel");
  }
  if ((mu0.mass.array() <= 0.0).any() || (mu1.mass.array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "marginals must be strictly positive on their grids");
  }
  if (!(options.tol > 0.0) || options.max_iter < 1) {
    throw Error(ErrorKind::InvalidArgument, "tol must be positive and max_iter >= 1");
  }
  const Eigen::VectorXd log_mu0 = mu0.mass.array().log();
  const Eigen::VectorXd log_mu1 = mu1.mass.array().log();
  const double log_h0 = std::log(mu0.cell_volume);
  const double log_h1 = std::log(mu1.cell_volume);

  // f and g absorb the cell volumes: pi_ij = exp(f_i + log_q_ij + g_j).
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n0);
  Eigen::VectorXd g = Eigen::VectorXd::Constant(n1, log_h1);
  if (options.initial_log_phi_1) {
    if (options.initial_log_phi_1->size() != n1) {
      throw Error(ErrorKind::InvalidArgument, "initial potential has the wrong length");
    }
    g = options.initial_log_phi_1->array() + log_h1;
  }

  PotentialPair out;
  out.epsilon = kernel.epsilon;
  Eigen::VectorXd row_lse(n0);
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (it = 1; it <= options.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n0; ++i) {
      row_lse[i] = simd::lse_shifted(kernel.log_q.data() + i * n1, g.data(), n1);
    }
    if (it > 1) {
      residual = 0.0;
      for (Eigen::Index i = 0; i < n0; ++i) residual += std::abs(std::exp(f[i] + row_lse[i]) - mu0.mass[i]);
      if (!std::isfinite(residual)) {
        throw Error(ErrorKind::NonFinite, "Sinkhorn residual is not finite at eps=" +
                                              std::to_string(kernel.epsilon));
      }
      if (options.trace_every > 0 && (it - 1) % options.trace_every == 0) {
        out.trace.emplace_back(it - 1, residual);
      }
      if (residual < options.tol) {
        converged = true;
        break;
      }
    }
    f = log_mu0 - row_lse;
    for (Eigen::Index j = 0; j < n1; ++j) {
      g[j] = log_mu1[j] - simd::lse_shifted(kernel.log_q_t.data() + j * n0, f.data(), n0);
    }
  }
  const int iterations = converged ? it - 1 : options.max_iter;

  double col_residual = 0.0;
  for (Eigen::Index j = 0; j < n1; ++j) {
    const double c = simd::lse_shifted(kernel.log_q_t.data() + j * n0, f.data(), n0);
    col_residual += std::abs(std::exp(g[j] + c) - mu1.mass[j]);
  }
  residual = std::max(residual, col_residual);
  if (!converged || !(residual < options.tol)) {
    throw NotConvergedError(iterations, residual, kernel.epsilon);
  }
  out.iterations = iterations;
  out.residual = residual;
  out.log_phi_hat_0 = f.array() - log_h0;
  out.log_phi_1 = g.array() - log_h1;
  if (options.trace_every > 0) out.trace.emplace_back(iterations, residual);
  return out;
}

DiscreteCoupling coupling(const KernelMatrix& kernel, const PotentialPair& pair,
                          const DiscreteMarginal& mu0, const DiscreteMarginal& mu1) {
  const Eigen::Index n0 = kernel.rows();
  const Eigen::Index n1 = kernel.cols();
  DiscreteCoupling pi;
  pi.source_points.assign(kernel.source.data(), kernel.source.data() + kernel.source.size());
  pi.target_points.assign(kernel.target.data(), kernel.target.data() + kernel.target.size());
  pi.mass.resize(n0, n1);
  const Eigen::VectorXd g = pair.log_phi_1.array() + std::log(mu1.cell_volume);
  std::vector<double> row(static_cast<std::size_t>(n1));
  std::vector<double> shifted(static_cast<std::size_t>(n1));
  for (Eigen::Index i = 0; i < n0; ++i) {
    const double f = pair.log_phi_hat_0[i] + std::log(mu0.cell_volume);
    for (Eigen::Index j = 0; j < n1; ++j) shifted[j] = kernel.log_q[i * n1 + j] + g[j];
    simd::exp_shifted(shifted.data(), f, row.data(), static_cast<std::size_t>(n1));
    for (Eigen::Index j = 0; j < n1; ++j) pi.mass(i, j) = row[j];
  }
  return pi;
}

std::pair<double, double> marginal_residuals(const DiscreteCoupling& pi, const DiscreteMarginal& mu0,
                                             const DiscreteMarginal& mu1) {
  return {(pi.row_sums() - mu0.mass).cwiseAbs().sum(), (pi.col_sums() - mu1.mass).cwiseAbs().sum()};
}

BridgeSolution solve_bridge(const TransitionTable& tbl, double eps, const GridDensity& rho0,
                            const GridDensity& rho1, const SinkhornOptions& options) {
  BridgeSolution sol;
  sol.mu0 = to_marginal(rho0);
  sol.mu1 = to_marginal(rho1);
  sol.kernel = build_kernel(tbl, eps, sol.mu0.points, sol.mu1.points);
  sol.pair = fortet_solve(sol.kernel, sol.mu0, sol.mu1, options);
  return sol;
}

GridDensity entropic_interpolation(const TransitionTable& tbl, const BridgeSolution& sol, double t,
                                   const std::vector<double>& eval_points,
                                   const GridDensity& rho0, const GridDensity& rho1) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "time " + std::to_string(t) + " outside [0,1]");
  }
  if (t == 0.0) return rho0.normalized();
  if (t == 1.0) return rho1.normalized();
  const double eps = sol.pair.epsilon;
  const Eigen::MatrixXd eval = as_column(eval_points);
  const KernelMatrix forward = build_kernel(tbl, eps, eval, sol.mu1.points, t, 1.0);
  const KernelMatrix backward = build_kernel(tbl, eps, sol.mu0.points, eval, 0.0, t);
  const Eigen::VectorXd g = sol.pair.log_phi_1.array() + std::log(sol.mu1.cell_volume);
  const Eigen::VectorXd f = sol.pair.log_phi_hat_0.array() + std::log(sol.mu0.cell_volume);
  const auto ne = static_cast<Eigen::Index>(eval_points.size());
  const Eigen::Index n0 = backward.rows();
  const Eigen::Index n1 = forward.cols();
  Eigen::VectorXd log_rho(ne);
  for (Eigen::Index e = 0; e < ne; ++e) {
    log_rho[e] = simd::lse_shifted(forward.log_q.data() + e * n1, g.data(), n1) +
                 simd::lse_shifted(backward.log_q_t.data() + e * n0, f.data(), n0);
  }
  GridDensity out;
  out.points = eval_points;
  const double peak = log_rho.maxCoeff();
  for (Eigen::Index e = 0; e < ne; ++e) out.weights.push_back(std::exp(log_rho[e] - peak));
  return out.normalized();
}

bool nonincreasing_with_slack(const std::vector<double>& values, double slack) {
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > (1.0 + slack) * values[k - 1]) return false;
  }
  return true;
}

SweepResult zero_noise_sweep(const TransitionTable& tbl, const GridDensity& rho0,
                             const GridDensity& rho1, const std::vector<double>& eps_list,
                             const SweepOptions& options) {
  if (tbl.dim() != 1) throw Error(ErrorKind::InvalidArgument, "the sweep compares 1-D flows");
  if (eps_list.empty()) throw Error(ErrorKind::InvalidArgument, "empty epsilon list");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0) || (k > 0 && !(eps_list[k] < eps_list[k - 1]))) {
      throw Error(ErrorKind::InvalidArgument,
                  "epsilon list must be positive and strictly decreasing");
    }
  }
  const TransportMap1D map = omt_map_1d(tbl, rho0, rho1);
  const double ts = options.t_star;

  // The evaluation grid spans the transported particles at t_star plus the
  // widest bridge spread.
  const Interpolant probe = displacement_interp(tbl, map, rho0, ts, rho0.points);
  const auto [lo, hi] = std::minmax_element(probe.positions.begin(), probe.positions.end());
  const double spread = std::max(tbl.from_origin(ts).gramian(0, 0), tbl.to_terminal(ts).gramian(0, 0));
  const double margin = 4.0 * std::sqrt(eps_list.front() * spread);
  SweepResult result;
  result.eval_points =
      GridDensity::uniform_grid(*lo - margin, *hi + margin, options.eval_points).points;
  result.omt_flow = displacement_interp(tbl, map, rho0, ts, result.eval_points).density;

  SinkhornOptions solver = options.solver;
  std::optional<Eigen::VectorXd> previous;
  double previous_eps = 0.0;
  for (double eps : eps_list) {
    solver.initial_log_phi_1.reset();
    if (options.warm_start && previous) solver.initial_log_phi_1 = *previous * (previous_eps / eps);
    const BridgeSolution sol = solve_bridge(tbl, eps, rho0, rho1, solver);
    const DiscreteCoupling pi = coupling(sol.kernel, sol.pair, sol.mu0, sol.mu1);
    SweepRow row;
    row.epsilon = eps;
    row.iterations = sol.pair.iterations;
    row.residual = sol.pair.residual;
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
      const double target = map(pi.source_points[i]);
      for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
        row.coupling_distance += pi.mass(i, j) * std::abs(pi.target_points[j] - target);
      }
    }
    GridDensity flow = entropic_interpolation(tbl, sol, ts, result.eval_points, rho0, rho1);
    row.flow_distance = w1_same_grid(flow, result.omt_flow);
    result.rows.push_back(row);
    result.entropic_flows.push_back(std::move(flow));
    previous = sol.pair.log_phi_1;
    previous_eps = eps;
  }
  return result;
}

TransformCheck potential_transform_check(const TransitionTable& tbl, const BridgeSolution& sol,
                                         const SinkhornOptions& options) {
  const Eigen::MatrixXd m_inv_half = inv_sqrtm_spd(tbl.m10());
  const Eigen::MatrixXd c0 = m_inv_half * tbl.phi10();
  const double abs_det_phi = std::abs(tbl.phi10().determinant());
  const double sqrt_det_m = std::sqrt(tbl.m10().determinant());

  DiscreteMarginal hat0{sol.mu0.points * c0.transpose(), sol.mu0.mass,
                        sol.mu0.cell_volume * abs_det_phi / sqrt_det_m};
  DiscreteMarginal hat1{sol.mu1.points * m_inv_half.transpose(), sol.mu1.mass,
                        sol.mu1.cell_volume / sqrt_det_m};

  // phi_hat_0(x) = |Phi10| phi_hat_0^B(M10^{-1/2} Phi10 x) and
  // phi_1(y) = |M10|^{-1/2} phi_1^B(M10^{-1/2} y).
  PotentialPair transformed = sol.pair;
  transformed.log_phi_hat_0 = sol.pair.log_phi_hat_0.array() - std::log(abs_det_phi);
  transformed.log_phi_1 = sol.pair.log_phi_1.array() + std::log(sqrt_det_m);

  const KernelMatrix qb = brownian_kernel(sol.pair.epsilon, hat0.points, hat1.points);
  const DiscreteCoupling via_transform = coupling(qb, transformed, hat0, hat1);
  const DiscreteCoupling original = coupling(sol.kernel, sol.pair, sol.mu0, sol.mu1);
  const PotentialPair direct_pair = fortet_solve(qb, hat0, hat1, options);
  const DiscreteCoupling direct = coupling(qb, direct_pair, hat0, hat1);

  TransformCheck out;
  out.pushforward_gap = l1_gap(via_transform.mass, original.mass);
  out.direct_gap = l1_gap(via_transform.mass, direct.mass);
  return out;
}

}  // namespace bridgeflow
