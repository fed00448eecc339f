#include "bridgeflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/matrix_functions.hpp"

namespace bridgeflow {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> uniform_times(int steps) {
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) t[k] = static_cast<double>(k) / steps;
  t.back() = 1.0;
  return t;
}

void require_steps(int steps) {
  if (steps < 2) throw Error(ErrorKind::InvalidArgument, "steps must be >= 2");
}

// Per-step linear drift x' = K x + c and noise matrix S; shared by all paths.
struct StepCoefficients {
  std::vector<Eigen::MatrixXd> k;
  std::vector<Eigen::VectorXd> c;
  std::vector<Eigen::MatrixXd> s;
};

Eigen::VectorXd standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = g(rng);
  return z;
}

struct PolicyValue {
  Eigen::MatrixXd pi;
  Eigen::VectorXd m;
};

// Cubic Hermite interpolation of Pi and m between policy grid points, with
// slopes from dPi/dt = -A'Pi - Pi A + Pi BB' Pi and dm/dt = -(A - BB'Pi)'m.
PolicyValue policy_at(const LinearSystem& sys, const BridgePolicy& policy, double t) {
  const int steps = policy.steps();
  const int k = std::clamp(static_cast<int>(std::floor(t * steps)), 0, steps - 1);
  const double t0 = policy.grid[k];
  const double t1 = policy.grid[k + 1];
  const double len = t1 - t0;
  const double s = (t - t0) / len;
  if (s == 0.0) return {policy.pi_flow[k], policy.m_flow[k]};
  auto slope = [&](int j, double tj) {
    const Eigen::MatrixXd a = sys.A(tj);
    const Eigen::MatrixXd& p = policy.pi_flow[j];
    const Eigen::MatrixXd pbb = p * sys.BBt(tj);
    return PolicyValue{-a.transpose() * p - p * a + pbb * p,
                       -(a.transpose() - pbb) * policy.m_flow[j]};
  };
  const PolicyValue d0 = slope(k, t0);
  const PolicyValue d1 = slope(k + 1, t1);
  const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
  const double h10 = s * (1.0 - s) * (1.0 - s) * len;
  const double h01 = s * s * (3.0 - 2.0 * s);
  const double h11 = s * s * (s - 1.0) * len;
  return {h00 * policy.pi_flow[k] + h10 * d0.pi + h01 * policy.pi_flow[k + 1] + h11 * d1.pi,
          h00 * policy.m_flow[k] + h10 * d0.m + h01 * policy.m_flow[k + 1] + h11 * d1.m};
}

}  // namespace

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path_index) {
  return splitmix64(splitmix64(seed) ^ path_index);
}

PathEnsemble simulate_gauss_bridge(const TransitionTable& tbl, const BridgePolicy& policy,
                                   const GaussianState& s0, double eps, int n_paths, int steps,
                                   std::uint64_t seed) {
  if (eps != policy.epsilon) {
    throw Error(ErrorKind::InvalidArgument, "policy was solved for eps=" +
                                                std::to_string(policy.epsilon));
  }
  if (n_paths < 1) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 1");
  require_steps(steps);
  if (policy.m_flow.empty()) throw Error(ErrorKind::InvalidArgument, "policy has no drift yet");
  const int n = tbl.dim();
  s0.validate(n);

  PathEnsemble ens;
  ens.times = uniform_times(steps);
  ens.seed = seed;
  ens.epsilon = eps;
  const double h = 1.0 / steps;

  StepCoefficients co;
  for (int k = 0; k < steps; ++k) {
    const double t = ens.times[k];
    const Eigen::MatrixXd b = tbl.system().B(t);
    const Eigen::MatrixXd bb = b * b.transpose();
    const PolicyValue pv = policy_at(tbl.system(), policy, t);
    co.k.push_back(tbl.system().A(t) - bb * pv.pi);
    co.c.push_back(bb * pv.m);
    co.s.push_back(std::sqrt(eps * h) * b);
  }
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(s0.cov).matrixL();
  const Eigen::Index m = co.s.front().cols();

  ens.paths.reserve(static_cast<std::size_t>(n_paths));
  for (int p = 0; p < n_paths; ++p) {
    std::mt19937_64 rng(path_seed(seed, static_cast<std::uint64_t>(p)));
    Eigen::MatrixXd path(n, steps + 1);
    path.col(0) = s0.mean + chol * standard_normal(rng, n);
    for (int k = 0; k < steps; ++k) {
      const Eigen::VectorXd x = path.col(k);
      Eigen::VectorXd next = x + h * (co.k[k] * x + co.c[k]);
      if (eps > 0.0) next += co.s[k] * standard_normal(rng, m);
      path.col(k + 1) = next;
    }
    ens.paths.push_back(std::move(path));
  }
  return ens;
}

PathEnsemble simulate_pinned_bridges(const TransitionTable& tbl, const Eigen::MatrixXd& xs,
                                     const Eigen::MatrixXd& ys, double eps, int steps,
                                     std::uint64_t seed) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be >= 0");
  require_steps(steps);
  const int n = tbl.dim();
  if (xs.rows() != n || ys.rows() != n || xs.cols() != ys.cols() || xs.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "endpoint matrices must be dim x n_paths and match");
  }
  PathEnsemble ens;
  ens.times = uniform_times(steps);
  ens.seed = seed;
  ens.epsilon = eps;
  const double h = 1.0 / steps;
  const int clamp_from = steps - 2;

  // Drift A x - BB' Phi(1,t)' M(1,t)^{-1} (Phi(1,t) x - y) = K x + G y.
  std::vector<Eigen::MatrixXd> k_mat;
  std::vector<Eigen::MatrixXd> g_mat;
  std::vector<Eigen::MatrixXd> s_mat;
  for (int k = 0; k < clamp_from; ++k) {
    const double t = ens.times[k];
    const TransitionPair term = tbl.to_terminal(t);
    const double cond = condition_number(term.gramian);
    if (!(cond <= kPinnedConditionLimit)) {
      throw Error(ErrorKind::SingularGuard,
                  "cond(M(1,t)) = " + std::to_string(cond) + " at t=" + std::to_string(t));
    }
    const Eigen::MatrixXd b = tbl.system().B(t);
    const Eigen::MatrixXd bb = b * b.transpose();
    const Eigen::MatrixXd g = bb * term.phi.transpose() * term.gramian.ldlt().solve(
                                                             Eigen::MatrixXd::Identity(n, n));
    k_mat.push_back(tbl.system().A(t) - g * term.phi);
    g_mat.push_back(g);
    s_mat.push_back(std::sqrt(eps * h) * b);
  }
  const Eigen::Index m = tbl.system().B(0.0).cols();

  for (Eigen::Index p = 0; p < xs.cols(); ++p) {
    std::mt19937_64 rng(path_seed(seed, static_cast<std::uint64_t>(p)));
    const Eigen::VectorXd y = ys.col(p);
    Eigen::MatrixXd path(n, steps + 1);
    path.col(0) = xs.col(p);
    for (int k = 0; k < steps; ++k) {
      const Eigen::VectorXd x = path.col(k);
      if (k >= clamp_from) {
        path.col(k + 1) = x + (y - x) * (h / (1.0 - ens.times[k]));
        continue;
      }
      Eigen::VectorXd next = x + h * (k_mat[k] * x + g_mat[k] * y);
      if (eps > 0.0) next += s_mat[k] * standard_normal(rng, m);
      path.col(k + 1) = next;
    }
    path.col(steps) = y;
    ens.paths.push_back(std::move(path));
  }
  return ens;
}

Eigen::MatrixXd simulate_pinned_bridge(const TransitionTable& tbl, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y, double eps, int steps,
                                       std::uint64_t seed) {
  return simulate_pinned_bridges(tbl, x, y, eps, steps, seed).paths.front();
}

EnsembleStats ensemble_stats(const PathEnsemble& ens) {
  if (ens.n_paths() < 2) throw Error(ErrorKind::InvalidArgument, "ensemble_stats needs >= 2 paths");
  const int n = ens.dim();
  const double count = ens.n_paths();
  EnsembleStats st;
  st.times = ens.times;
  for (int k = 0; k <= ens.steps(); ++k) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& path : ens.paths) mean += path.col(k);
    mean /= count;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
    for (const auto& path : ens.paths) {
      const Eigen::VectorXd d = path.col(k) - mean;
      cov.noalias() += d * d.transpose();
    }
    st.mean.push_back(mean);
    st.cov.push_back(cov / (count - 1.0));
  }
  return st;
}

}  // namespace bridgeflow
