#include "bridgeflow/omt_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/matrix_functions.hpp"

namespace bridgeflow {

namespace {

constexpr double kMassTol = 1e-6;

void require_scalar_state(const TransitionTable& tbl) {
  if (tbl.dim() != 1) {
    throw Error(ErrorKind::InvalidArgument,
                "grid densities need a 1-D state, got dimension " + std::to_string(tbl.dim()));
  }
}

struct ScalarReduction {
  double phi10;
  double sqrt_m10;
  double source_scale() const { return phi10 / sqrt_m10; }
};

ScalarReduction scalar_reduction(const TransitionTable& tbl) {
  require_scalar_state(tbl);
  const double phi10 = tbl.phi10()(0, 0);
  if (!(std::abs(phi10) > 0.0)) throw Error(ErrorKind::Singular, "Phi(1,0) is not invertible");
  return {phi10, std::sqrt(tbl.m10()(0, 0))};
}

GridDensity rescale(const GridDensity& rho, double factor) {
  GridDensity out;
  out.points.reserve(rho.size());
  out.weights.reserve(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    out.points.push_back(factor * rho.points[i]);
    out.weights.push_back(rho.weights[i] / std::abs(factor));
  }
  if (factor < 0.0) {
    std::reverse(out.points.begin(), out.points.end());
    std::reverse(out.weights.begin(), out.weights.end());
  }
  return out.normalized();
}

// Coefficients of the minimum-energy path x(t) = alpha x(0) + beta x(1).
std::pair<double, double> path_coefficients(const TransitionTable& tbl, double t) {
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  return {min_energy_path(tbl, one, zero, t)[0], min_energy_path(tbl, zero, one, t)[0]};
}

}  // namespace

double TransportMap1D::operator()(double at) const {
  if (x.empty()) throw Error(ErrorKind::InvalidArgument, "empty transport map");
  if (at <= x.front()) return tx.front();
  if (at >= x.back()) return tx.back();
  const auto it = std::upper_bound(x.begin(), x.end(), at);
  const auto hi = static_cast<std::size_t>(it - x.begin());
  const std::size_t lo = hi - 1;
  const double w = (at - x[lo]) / (x[hi] - x[lo]);
  return (1.0 - w) * tx[lo] + w * tx[hi];
}

bool TransportMap1D::nondecreasing() const {
  return std::is_sorted(tx.begin(), tx.end());
}

ReducedMarginals reduce_marginals(const TransitionTable& tbl, const GridDensity& rho0,
                                  const GridDensity& rho1) {
  const ScalarReduction r = scalar_reduction(tbl);
  return {rescale(rho0.normalized(), r.source_scale()), rescale(rho1.normalized(), 1.0 / r.sqrt_m10)};
}

std::pair<GaussianState, GaussianState> reduce_gaussian(const TransitionTable& tbl,
                                                        const GaussianState& s0,
                                                        const GaussianState& s1) {
  s0.validate(tbl.dim());
  s1.validate(tbl.dim());
  const Eigen::MatrixXd m_inv_half = inv_sqrtm_spd(tbl.m10());
  const Eigen::MatrixXd c0 = m_inv_half * tbl.phi10();
  return {GaussianState{c0 * s0.mean, symmetrize(c0 * s0.cov * c0.transpose())},
          GaussianState{m_inv_half * s1.mean, symmetrize(m_inv_half * s1.cov * m_inv_half)}};
}

double quantile(const GridDensity& rho, const std::vector<double>& edge_cdf, double u) {
  const double h = rho.spacing();
  const double lo = rho.lower_edge();
  const auto it = std::lower_bound(edge_cdf.begin(), edge_cdf.end(), u);
  if (it == edge_cdf.begin()) return lo;
  if (it == edge_cdf.end()) return lo + h * static_cast<double>(edge_cdf.size() - 1);
  const auto k = static_cast<std::size_t>(it - edge_cdf.begin());
  const double cell_mass = edge_cdf[k] - edge_cdf[k - 1];
  return lo + h * (static_cast<double>(k - 1) + (u - edge_cdf[k - 1]) / cell_mass);
}

TransportMap1D monotone_map_1d(const GridDensity& rho0_hat, const GridDensity& rho1_hat) {
  const GridDensity src = rho0_hat.normalized();
  const GridDensity dst = rho1_hat.normalized();
  const auto f0 = src.edge_cdf();
  const auto f1 = dst.edge_cdf();
  TransportMap1D map;
  map.x = src.points;
  map.tx.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    map.tx.push_back(quantile(dst, f1, 0.5 * (f0[i] + f0[i + 1])));
  }
  return map;
}

TransportMap1D lift_map(const TransitionTable& tbl, const TransportMap1D& t_hat) {
  const ScalarReduction r = scalar_reduction(tbl);
  TransportMap1D out;
  for (std::size_t i = 0; i < t_hat.x.size(); ++i) {
    out.x.push_back(t_hat.x[i] / r.source_scale());
    out.tx.push_back(r.sqrt_m10 * t_hat.tx[i]);
  }
  if (r.source_scale() < 0.0) {
    std::reverse(out.x.begin(), out.x.end());
    std::reverse(out.tx.begin(), out.tx.end());
  }
  return out;
}

TransportMap1D omt_map_1d(const TransitionTable& tbl, const GridDensity& rho0,
                          const GridDensity& rho1) {
  const ReducedMarginals red = reduce_marginals(tbl, rho0, rho1);
  TransportMap1D map = lift_map(tbl, monotone_map_1d(red.rho0_hat, red.rho1_hat));
  // Undo the roundoff of the forward and backward scaling on the source grid.
  map.x = rho0.points;
  return map;
}

GridDensity deposit(const std::vector<double>& positions, const std::vector<double>& masses,
                    const std::vector<double>& eval_points) {
  if (positions.size() != masses.size()) {
    throw Error(ErrorKind::InvalidArgument, "positions and masses differ in length");
  }
  GridDensity out;
  out.points = eval_points;
  out.weights.assign(eval_points.size(), 0.0);
  const double h = out.spacing();
  const double x0 = eval_points.front();
  const auto last = static_cast<long>(eval_points.size()) - 1;
  for (std::size_t p = 0; p < positions.size(); ++p) {
    if (!std::isfinite(positions[p])) {
      throw Error(ErrorKind::NonFinite, "particle position is not finite");
    }
    const double u = (positions[p] - x0) / h;
    if (u <= 0.0) {
      out.weights.front() += masses[p];
    } else if (u >= static_cast<double>(last)) {
      out.weights.back() += masses[p];
    } else {
      const auto i = static_cast<long>(std::floor(u));
      const double frac = u - static_cast<double>(i);
      out.weights[i] += (1.0 - frac) * masses[p];
      out.weights[i + 1] += frac * masses[p];
    }
  }
  for (double& w : out.weights) w /= h;
  return out;
}

Interpolant displacement_interp(const TransitionTable& tbl, const TransportMap1D& map,
                                const GridDensity& rho0, double t,
                                const std::vector<double>& eval_points) {
  require_scalar_state(tbl);
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "time " + std::to_string(t) + " outside [0,1]");
  }
  const GridDensity src = rho0.normalized();
  const auto [alpha, beta] = path_coefficients(tbl, t);
  Interpolant out;
  out.t = t;
  out.masses = src.masses();
  out.positions.reserve(src.size());
  for (double x : src.points) out.positions.push_back(alpha * x + beta * map(x));
  out.density = deposit(out.positions, out.masses, eval_points);
  return out;
}

double transport_cost(const TransitionTable& tbl, const TransportMap1D& map,
                      const GridDensity& rho0) {
  const ScalarReduction r = scalar_reduction(tbl);
  const GridDensity src = rho0.normalized();
  const double m10 = r.sqrt_m10 * r.sqrt_m10;
  double cost = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double gap = map(src.points[i]) - r.phi10 * src.points[i];
    cost += src.weights[i] * gap * gap;
  }
  return 0.5 * cost * src.spacing() / m10;
}

double transport_cost(const TransitionTable& tbl, const DiscreteCoupling& coupling,
                      const GridDensity& rho0, const GridDensity& rho1) {
  const ScalarReduction r = scalar_reduction(tbl);
  const auto m0 = rho0.normalized().masses();
  const auto m1 = rho1.normalized().masses();
  if (coupling.mass.rows() != static_cast<Eigen::Index>(m0.size()) ||
      coupling.mass.cols() != static_cast<Eigen::Index>(m1.size())) {
    throw Error(ErrorKind::InvalidArgument, "coupling shape does not match the marginal grids");
  }
  const Eigen::VectorXd rows = coupling.row_sums();
  const Eigen::VectorXd cols = coupling.col_sums();
  double row_gap = 0.0;
  double col_gap = 0.0;
  for (std::size_t i = 0; i < m0.size(); ++i) row_gap += std::abs(rows[i] - m0[i]);
  for (std::size_t j = 0; j < m1.size(); ++j) col_gap += std::abs(cols[j] - m1[j]);
  if (row_gap > kMassTol || col_gap > kMassTol) {
    throw Error(ErrorKind::MassMismatch, "coupling marginals deviate by " +
                                             std::to_string(std::max(row_gap, col_gap)));
  }
  const double m10 = r.sqrt_m10 * r.sqrt_m10;
  double cost = 0.0;
  for (Eigen::Index i = 0; i < coupling.mass.rows(); ++i) {
    const double free_end = r.phi10 * coupling.source_points[i];
    for (Eigen::Index j = 0; j < coupling.mass.cols(); ++j) {
      const double gap = coupling.target_points[j] - free_end;
      cost += coupling.mass(i, j) * gap * gap;
    }
  }
  return 0.5 * cost / m10;
}

double hatted_transport_cost(const TransportMap1D& t_hat, const GridDensity& rho0_hat) {
  const GridDensity src = rho0_hat.normalized();
  double cost = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double gap = t_hat(src.points[i]) - src.points[i];
    cost += src.weights[i] * gap * gap;
  }
  return 0.5 * cost * src.spacing();
}

double hopf_lax_psi(const TransitionTable& tbl, const ScalarFieldGrid& psi0, double t,
                    const Eigen::VectorXd& x) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "Hopf-Lax evaluation needs t in (0,1], got " +
                                           std::to_string(t));
  }
  if (psi0.points.empty() || psi0.points.size() != psi0.values.size()) {
    throw Error(ErrorKind::InvalidArgument, "psi0 samples are empty or mismatched");
  }
  const TransitionPair at_t = tbl.from_origin(t);
  const auto m_ldlt = at_t.gramian.ldlt();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < psi0.points.size(); ++i) {
    const Eigen::VectorXd gap = x - at_t.phi * psi0.points[i];
    best = std::min(best, psi0.values[i] + 0.5 * gap.dot(m_ldlt.solve(gap)));
  }
  return best;
}

double hj_residual_grid(const TransitionTable& tbl, const TabulatedPsi& psi) {
  require_scalar_state(tbl);
  const auto nt = static_cast<Eigen::Index>(psi.times.size());
  const auto nx = static_cast<Eigen::Index>(psi.xs.size());
  if (psi.values.rows() != nt || psi.values.cols() != nx || nt < 3 || nx < 3) {
    throw Error(ErrorKind::InvalidArgument, "tabulated psi needs at least 3x3 matching samples");
  }
  const LinearSystem& sys = tbl.system();
  double worst = 0.0;
  for (Eigen::Index k = 1; k + 1 < nt; ++k) {
    const double t = psi.times[k];
    const double a = sys.A(t)(0, 0);
    const double bb = sys.BBt(t)(0, 0);
    const double dt = psi.times[k + 1] - psi.times[k - 1];
    for (Eigen::Index j = 1; j + 1 < nx; ++j) {
      const double psi_t = (psi.values(k + 1, j) - psi.values(k - 1, j)) / dt;
      const double psi_x =
          (psi.values(k, j + 1) - psi.values(k, j - 1)) / (psi.xs[j + 1] - psi.xs[j - 1]);
      const double residual = psi_t + psi.xs[j] * a * psi_x + 0.5 * bb * psi_x * psi_x;
      worst = std::max(worst, std::abs(residual));
    }
  }
  return worst;
}

}  // namespace bridgeflow
