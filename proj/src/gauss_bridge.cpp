#include "bridgeflow/gauss_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/matrix_functions.hpp"

namespace bridgeflow {

void GaussianState::validate(int dim) const {
  if (mean.size() != dim || cov.rows() != dim || cov.cols() != dim) {
    throw Error(ErrorKind::InvalidArgument,
                "Gaussian marginal has wrong dimension (expected " + std::to_string(dim) + ")");
  }
  if (!mean.allFinite() || !cov.allFinite()) {
    throw Error(ErrorKind::NonFinite, "Gaussian marginal has non-finite entries");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::InvalidArgument, "covariance is not symmetric");
  }
  if (!(min_eigenvalue(cov) > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "covariance is not positive definite");
  }
}

namespace {

Eigen::MatrixXd interpolate(const std::vector<double>& grid, const std::vector<Eigen::MatrixXd>& v,
                            double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "time " + std::to_string(t) + " outside [0,1]");
  }
  const int steps = static_cast<int>(grid.size()) - 1;
  const int k = std::clamp(static_cast<int>(std::floor(t * steps)), 0, steps - 1);
  const double w = (t - grid[k]) / (grid[k + 1] - grid[k]);
  return (1.0 - w) * v[k] + w * v[k + 1];
}

// Sigma0^{1/2} Phi10' M10^{-1} Sigma1 M10^{-1} Phi10 Sigma0^{1/2}, its square
// root, and the two half-power factors of Sigma0 shared by the closed forms.
struct BoundaryTerms {
  Eigen::MatrixXd s0_half;
  Eigen::MatrixXd s0_inv_half;
  Eigen::MatrixXd free_term;   // Sigma0^{1/2} Phi10' M10^{-1} Phi10 Sigma0^{1/2}
  Eigen::MatrixXd coupling;    // Sigma0^{1/2} Phi10' M10^{-1} Sigma1 M10^{-1} Phi10 Sigma0^{1/2}
};

BoundaryTerms boundary_terms(const TransitionTable& tbl, const GaussianState& s0,
                             const GaussianState& s1) {
  s0.validate(tbl.dim());
  s1.validate(tbl.dim());
  BoundaryTerms b;
  b.s0_half = sqrtm_psd(s0.cov);
  b.s0_inv_half = inv_sqrtm_spd(s0.cov);
  const Eigen::MatrixXd w = tbl.m10_inverse() * tbl.phi10() * b.s0_half;
  b.free_term = symmetrize(b.s0_half * tbl.phi10().transpose() * w);
  b.coupling = symmetrize(w.transpose() * s1.cov * w);
  return b;
}

struct ClosedLoopState {
  Eigen::MatrixXd pi;
  Eigen::MatrixXd phi_hat;
  Eigen::MatrixXd m_hat;
  Eigen::MatrixXd phi_hat_inv;
  Eigen::MatrixXd drift_gramian;
};

ClosedLoopState closed_loop_deriv(const LinearSystem& sys, double t, const ClosedLoopState& s) {
  const Eigen::MatrixXd a = sys.A(t);
  const Eigen::MatrixXd bb = sys.BBt(t);
  const Eigen::MatrixXd a_cl = a - bb * s.pi;
  ClosedLoopState d;
  d.pi = -a.transpose() * s.pi - s.pi * a + s.pi * bb * s.pi;
  d.phi_hat = a_cl * s.phi_hat;
  d.m_hat = a_cl * s.m_hat + s.m_hat * a_cl.transpose() + bb;
  d.phi_hat_inv = -s.phi_hat_inv * a_cl;
  d.drift_gramian = s.phi_hat_inv * bb * s.phi_hat_inv.transpose();
  return d;
}

ClosedLoopState axpy(const ClosedLoopState& s, double h, const ClosedLoopState& d) {
  return {s.pi + h * d.pi, s.phi_hat + h * d.phi_hat, s.m_hat + h * d.m_hat,
          s.phi_hat_inv + h * d.phi_hat_inv, s.drift_gramian + h * d.drift_gramian};
}

void check_escape(const Eigen::MatrixXd& pi, double t) {
  if (!pi.allFinite() || pi.cwiseAbs().rowwise().sum().maxCoeff() > kRiccatiBlowUp) {
    throw Error(ErrorKind::BlowUp, "Riccati flow escaped before t=" + std::to_string(t));
  }
}

}  // namespace

Eigen::MatrixXd BridgePolicy::pi_at(double t) const { return interpolate(grid, pi_flow, t); }

Eigen::VectorXd BridgePolicy::m_at(double t) const {
  if (m_flow.empty()) throw Error(ErrorKind::InvalidArgument, "policy has no drift yet");
  std::vector<Eigen::MatrixXd> as_mat(m_flow.begin(), m_flow.end());
  return interpolate(grid, as_mat, t);
}

Eigen::MatrixXd initial_riccati(const TransitionTable& tbl, double eps, const GaussianState& s0,
                                const GaussianState& s1) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be >= 0");
  const BoundaryTerms b = boundary_terms(tbl, s0, s1);
  const int n = tbl.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd root = sqrtm_psd(0.25 * eps * eps * id + b.coupling);
  const Eigen::MatrixXd inner = 0.5 * eps * id + b.free_term - root;
  return symmetrize(b.s0_inv_half * inner * b.s0_inv_half);
}

BridgePolicy riccati_flow(const TransitionTable& tbl, const Eigen::MatrixXd& pi0, double eps) {
  const int n = tbl.dim();
  if (pi0.rows() != n || pi0.cols() != n) {
    throw Error(ErrorKind::InvalidArgument, "pi0 has wrong shape");
  }
  const LinearSystem& sys = tbl.system();
  const double h = tbl.dt();
  BridgePolicy policy;
  policy.epsilon = eps;
  policy.grid = tbl.grid();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  ClosedLoopState s{symmetrize(pi0), id, zero, id, zero};
  check_escape(s.pi, 0.0);
  auto record = [&policy](const ClosedLoopState& st) {
    policy.pi_flow.push_back(st.pi);
    policy.phi_hat.push_back(st.phi_hat);
    policy.m_hat.push_back(st.m_hat);
    policy.phi_hat_inv.push_back(st.phi_hat_inv);
    policy.drift_gramian.push_back(st.drift_gramian);
  };
  record(s);
  for (int k = 0; k < tbl.steps(); ++k) {
    const double t = policy.grid[k];
    const ClosedLoopState k1 = closed_loop_deriv(sys, t, s);
    const ClosedLoopState k2 = closed_loop_deriv(sys, t + 0.5 * h, axpy(s, 0.5 * h, k1));
    const ClosedLoopState k3 = closed_loop_deriv(sys, t + 0.5 * h, axpy(s, 0.5 * h, k2));
    const ClosedLoopState k4 = closed_loop_deriv(sys, t + h, axpy(s, h, k3));
    s.pi = symmetrize(s.pi + (h / 6.0) * (k1.pi + 2.0 * k2.pi + 2.0 * k3.pi + k4.pi));
    s.phi_hat += (h / 6.0) * (k1.phi_hat + 2.0 * k2.phi_hat + 2.0 * k3.phi_hat + k4.phi_hat);
    s.m_hat = symmetrize(s.m_hat +
                         (h / 6.0) * (k1.m_hat + 2.0 * k2.m_hat + 2.0 * k3.m_hat + k4.m_hat));
    s.phi_hat_inv += (h / 6.0) * (k1.phi_hat_inv + 2.0 * k2.phi_hat_inv + 2.0 * k3.phi_hat_inv +
                                  k4.phi_hat_inv);
    s.drift_gramian = symmetrize(s.drift_gramian +
                                 (h / 6.0) * (k1.drift_gramian + 2.0 * k2.drift_gramian +
                                              2.0 * k3.drift_gramian + k4.drift_gramian));
    check_escape(s.pi, policy.grid[k + 1]);
    record(s);
  }
  policy.m_hat_10 = policy.m_hat.back();
  return policy;
}

Eigen::MatrixXd pi_zero_explicit(const TransitionTable& tbl, const GaussianState& s0,
                                 const GaussianState& s1, double t) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "explicit Pi_0(t) needs t in (0,1], got " + std::to_string(t));
  }
  const BoundaryTerms b = boundary_terms(tbl, s0, s1);
  const Eigen::MatrixXd g10 = tbl.phi10().transpose() * tbl.m10_inverse() * tbl.phi10();
  const Eigen::MatrixXd transport = b.s0_inv_half * sqrtm_psd(b.coupling) * b.s0_inv_half;

  const TransitionPair at_t = tbl.from_origin(t);
  const int n = tbl.dim();
  const Eigen::MatrixXd m_inv =
      symmetrize(at_t.gramian.ldlt().solve(Eigen::MatrixXd::Identity(n, n)));
  const Eigen::MatrixXd bracket =
      symmetrize(g10 - transport - at_t.phi.transpose() * m_inv * at_t.phi);
  const double scale = std::max({g10.norm(), transport.norm(),
                                 (at_t.phi.transpose() * m_inv * at_t.phi).norm()});
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(bracket);
  const double smallest = svd.singularValues()[svd.singularValues().size() - 1];
  if (condition_number(bracket) > kExplicitConditionLimit ||
      smallest <= scale / kExplicitConditionLimit) {
    throw Error(ErrorKind::Singular, "bracketed matrix is singular at t=" + std::to_string(t));
  }
  const Eigen::MatrixXd right = at_t.phi.transpose() * m_inv;
  return symmetrize(-m_inv - right.transpose() * bracket.partialPivLu().solve(right));
}

const std::vector<Eigen::VectorXd>& affine_drift(const TransitionTable& tbl, BridgePolicy& policy,
                                                 const Eigen::VectorXd& m0,
                                                 const Eigen::VectorXd& m1) {
  const int n = tbl.dim();
  if (m0.size() != n || m1.size() != n) {
    throw Error(ErrorKind::InvalidArgument, "mean vectors have wrong dimension");
  }
  if (policy.pi_flow.empty()) throw Error(ErrorKind::InvalidArgument, "policy has no Riccati flow");
  if (!(min_eigenvalue(policy.m_hat_10) > kControllabilityTol)) {
    throw Error(ErrorKind::NonControllable, "closed-loop Gramian M_hat(1,0) is singular");
  }
  const Eigen::MatrixXd& phi_hat_10 = policy.phi_hat.back();
  const Eigen::VectorXd gain = policy.m_hat_10.ldlt().solve(m1 - phi_hat_10 * m0);
  // m(t) = Phi_hat(1,t)' gain = Phi_hat(t,0)^{-T} Phi_hat(1,0)' gain, and
  // c(t) = -1/2 int_0^t m'BB'm ds is a quadratic form in the drift Gramian.
  const Eigen::VectorXd terminal = phi_hat_10.transpose() * gain;
  policy.m_flow.clear();
  policy.c_flow.clear();
  for (int k = 0; k <= policy.steps(); ++k) {
    policy.m_flow.push_back(policy.phi_hat_inv[k].transpose() * terminal);
    policy.c_flow.push_back(-0.5 * terminal.dot(policy.drift_gramian[k] * terminal));
  }
  return policy.m_flow;
}

BridgePolicy solve_gaussian_bridge(const TransitionTable& tbl, double eps, const GaussianState& s0,
                                   const GaussianState& s1) {
  BridgePolicy policy = riccati_flow(tbl, initial_riccati(tbl, eps, s0, s1), eps);
  affine_drift(tbl, policy, s0.mean, s1.mean);
  return policy;
}

std::vector<Eigen::MatrixXd> lyapunov_covariance_flow(const TransitionTable& tbl,
                                                      const Eigen::MatrixXd& pi0,
                                                      const Eigen::MatrixXd& sigma0, double eps) {
  const LinearSystem& sys = tbl.system();
  const double h = tbl.dt();
  struct State {
    Eigen::MatrixXd pi;
    Eigen::MatrixXd sigma;
  };
  auto deriv = [&](double t, const State& s) {
    const Eigen::MatrixXd a = sys.A(t);
    const Eigen::MatrixXd bb = sys.BBt(t);
    const Eigen::MatrixXd a_cl = a - bb * s.pi;
    return State{-a.transpose() * s.pi - s.pi * a + s.pi * bb * s.pi,
                 a_cl * s.sigma + s.sigma * a_cl.transpose() + eps * bb};
  };
  auto step = [](const State& s, double w, const State& d) {
    return State{s.pi + w * d.pi, s.sigma + w * d.sigma};
  };
  State s{symmetrize(pi0), symmetrize(sigma0)};
  std::vector<Eigen::MatrixXd> out{s.sigma};
  for (int k = 0; k < tbl.steps(); ++k) {
    const double t = tbl.grid()[k];
    const State k1 = deriv(t, s);
    const State k2 = deriv(t + 0.5 * h, step(s, 0.5 * h, k1));
    const State k3 = deriv(t + 0.5 * h, step(s, 0.5 * h, k2));
    const State k4 = deriv(t + h, step(s, h, k3));
    s.pi = symmetrize(s.pi + (h / 6.0) * (k1.pi + 2.0 * k2.pi + 2.0 * k3.pi + k4.pi));
    s.sigma =
        symmetrize(s.sigma + (h / 6.0) * (k1.sigma + 2.0 * k2.sigma + 2.0 * k3.sigma + k4.sigma));
    check_escape(s.pi, tbl.grid()[k + 1]);
    out.push_back(s.sigma);
  }
  return out;
}

MomentFlow moment_flow(const TransitionTable& tbl, const BridgePolicy& policy,
                       const GaussianState& s0, const GaussianState& s1) {
  if (policy.m_flow.empty()) throw Error(ErrorKind::InvalidArgument, "policy has no drift yet");
  MomentFlow flow;
  flow.grid = policy.grid;
  // n(t) = Phi_hat(t,0) m0 + int_0^t Phi_hat(t,s) BB' m(s) ds, and since
  // m(s) = Phi_hat(t,s)' m(t) the integral collapses to M_hat(t,0) m(t).
  for (int k = 0; k <= policy.steps(); ++k) {
    flow.mean.push_back(policy.phi_hat[k] * s0.mean + policy.m_hat[k] * policy.m_flow[k]);
  }
  if (policy.epsilon > 0.0) {
    flow.cov = lyapunov_covariance_flow(tbl, policy.pi_flow.front(), s0.cov, policy.epsilon);
    return flow;
  }
  const BoundaryTerms b = boundary_terms(tbl, s0, s1);
  const Eigen::MatrixXd offset = sqrtm_psd(b.coupling) - b.free_term;
  const int n = tbl.dim();
  flow.cov.push_back(symmetrize(s0.cov));
  for (int k = 1; k <= policy.steps(); ++k) {
    const Eigen::MatrixXd& phi = tbl.phi(k);
    const Eigen::MatrixXd& m = tbl.gramian(k);
    const Eigen::MatrixXd m_inv = symmetrize(m.ldlt().solve(Eigen::MatrixXd::Identity(n, n)));
    const Eigen::MatrixXd bracket =
        offset + b.s0_half * phi.transpose() * m_inv * phi * b.s0_half;
    // M(t,0) Phi(0,t)' Sigma0^{-1/2} [.]^2 Sigma0^{-1/2} Phi(0,t) M(t,0)
    const Eigen::MatrixXd left =
        phi.partialPivLu().solve(m).transpose() * b.s0_inv_half;
    flow.cov.push_back(symmetrize(left * bracket * bracket * left.transpose()));
  }
  return flow;
}

Eigen::VectorXd feedback_control(const TransitionTable& tbl, const BridgePolicy& policy, double t,
                                 const Eigen::VectorXd& x) {
  const Eigen::MatrixXd b = tbl.system().B(t);
  return b.transpose() * (-policy.pi_at(t) * x + policy.m_at(t));
}

double value_function(const BridgePolicy& policy, int k, const Eigen::VectorXd& x) {
  return -0.5 * x.dot(policy.pi_flow[k] * x) + policy.m_flow[k].dot(x) + policy.c_flow[k];
}

HjProbe make_hj_probe(const BridgePolicy& policy, int n_times, double lo, double hi,
                      int n_per_dim) {
  HjProbe probe;
  const int steps = policy.steps();
  const int first = std::min(2, steps / 2);
  const int last = std::max(first, steps - 2);
  for (int i = 0; i < n_times; ++i) {
    const double frac = n_times == 1 ? 0.5 : static_cast<double>(i) / (n_times - 1);
    probe.time_indices.push_back(first + static_cast<int>(std::lround(frac * (last - first))));
  }
  const int dim = static_cast<int>(policy.pi_flow.front().rows());
  std::vector<double> axis(n_per_dim);
  for (int i = 0; i < n_per_dim; ++i) {
    axis[i] = n_per_dim == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n_per_dim - 1);
  }
  std::vector<int> idx(dim, 0);
  while (true) {
    Eigen::VectorXd p(dim);
    for (int d = 0; d < dim; ++d) p[d] = axis[idx[d]];
    probe.points.push_back(p);
    int d = 0;
    while (d < dim && ++idx[d] == n_per_dim) idx[d++] = 0;
    if (d == dim) break;
  }
  return probe;
}

namespace {

// True when a knot of a tabulated A or B lies strictly inside (lo, hi); the
// value function is only C1 there, so a stencil spanning it loses accuracy.
bool spans_knot(const LinearSystem& sys, double lo, double hi) {
  for (const MatrixFunction* f : {&sys.a_function(), &sys.b_function()}) {
    for (double knot : f->knots()) {
      if (knot > lo + 1e-12 && knot < hi - 1e-12) return true;
    }
  }
  return false;
}

}  // namespace

double hj_residual_gaussian(const TransitionTable& tbl, const BridgePolicy& policy,
                            const HjProbe& probe) {
  if (policy.m_flow.empty() || policy.c_flow.empty()) {
    throw Error(ErrorKind::InvalidArgument, "policy has no drift yet");
  }
  const int steps = policy.steps();
  const LinearSystem& sys = tbl.system();
  const auto& g = policy.grid;
  for (const int k : probe.time_indices) {
    if (k < 0 || k > steps) throw Error(ErrorKind::OutOfRange, "probe time index outside grid");
  }
  double worst = 0.0;
  for (const int k : probe.time_indices) {
    const double t = g[k];
    const double dt = g[std::min(k + 1, steps)] - g[std::max(k - 1, 0)];
    const double a_dt = steps >= 1 ? g[1] - g[0] : 1.0;
    // Centred five-point stencil when it fits and avoids knots, otherwise a
    // six-point one-sided stencil on the side without a knot.
    int kind = 0;  // 0 centred, 1 forward, -1 backward, 2 low-order fallback
    if (k >= 2 && k + 2 <= steps && !spans_knot(sys, g[k - 2], g[k + 2])) {
      kind = 0;
    } else if (k + 5 <= steps && !spans_knot(sys, g[k], g[k + 5])) {
      kind = 1;
    } else if (k >= 5 && !spans_knot(sys, g[k - 5], g[k])) {
      kind = -1;
    } else {
      kind = k >= 2 && k + 2 <= steps ? 0 : 2;
    }
    const Eigen::MatrixXd a = sys.A(t);
    const Eigen::MatrixXd bb = sys.BBt(t);
    for (const auto& x : probe.points) {
      auto v = [&](int j) { return value_function(policy, j, x); };
      double dpsi_dt;
      switch (kind) {
        case 0:
          dpsi_dt = (-v(k + 2) + 8.0 * v(k + 1) - 8.0 * v(k - 1) + v(k - 2)) / (12.0 * a_dt);
          break;
        case 1:
          dpsi_dt = (-137.0 * v(k) + 300.0 * v(k + 1) - 300.0 * v(k + 2) + 200.0 * v(k + 3) -
                     75.0 * v(k + 4) + 12.0 * v(k + 5)) /
                    (60.0 * a_dt);
          break;
        case -1:
          dpsi_dt = (137.0 * v(k) - 300.0 * v(k - 1) + 300.0 * v(k - 2) - 200.0 * v(k - 3) +
                     75.0 * v(k - 4) - 12.0 * v(k - 5)) /
                    (60.0 * a_dt);
          break;
        default:
          dpsi_dt = (v(std::min(k + 1, steps)) - v(std::max(k - 1, 0))) / dt;
      }
      const Eigen::VectorXd grad = -policy.pi_flow[k] * x + policy.m_flow[k];
      const double residual = dpsi_dt + x.dot(a.transpose() * grad) + 0.5 * grad.dot(bb * grad);
      worst = std::max(worst, std::abs(residual));
    }
  }
  return worst;
}

}  // namespace bridgeflow
