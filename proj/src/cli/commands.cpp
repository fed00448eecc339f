#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "bridgeflow/cli.hpp"
#include "bridgeflow/matrix_functions.hpp"
#include "bridgeflow/omt_core.hpp"
#include "bridgeflow/sampler.hpp"
#include "bridgeflow/sinkhorn_bridge.hpp"

namespace bridgeflow::cli {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> indexed(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

std::vector<std::string> indexed2(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) out.push_back(stem + "_" + std::to_string(i) + std::to_string(j));
  return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Row-major flattening.
void append(std::vector<double>& row, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

class Report {
 public:
  explicit Report(CommandResult& r) : r_(r) {}
  void line(const std::string& s) { r_.lines.push_back(s); }
  void check(const std::string& name, double value, double limit, bool pass) {
    r_.ok = r_.ok && pass;
    r_.lines.push_back(std::string(pass ? "PASS " : "FAIL ") + name + " = " + fmt(value) +
                       " (limit " + fmt(limit) + ")");
  }
  void below(const std::string& name, double value, double limit) {
    check(name, value, limit, value < limit);
  }
  fs::path file(const fs::path& p) {
    r_.files.push_back(p);
    return p;
  }

 private:
  CommandResult& r_;
};

const GaussianMarginals& need_gaussian(const ExperimentConfig& cfg, const std::string& cmd) {
  if (!cfg.gaussian) throw Error(ErrorKind::Config, cmd + " needs \"gaussian\" marginals");
  return *cfg.gaussian;
}

const GridMarginals& need_grid(const ExperimentConfig& cfg, const std::string& cmd) {
  if (!cfg.grid1d) throw Error(ErrorKind::Config, cmd + " needs \"grid1d\" marginals");
  return *cfg.grid1d;
}

void need_epsilon(const ExperimentConfig& cfg, const std::string& cmd) {
  if (cfg.epsilon.empty()) throw Error(ErrorKind::Config, cmd + " needs at least one epsilon");
}

void write_ensemble(Report& rep, const fs::path& dir, const std::string& tag,
                    const PathEnsemble& ens) {
  const int n = ens.dim();
  CsvWriter paths(rep.file(dir / ("paths_" + tag + ".csv")),
                  concat({"path_id", "t"}, indexed("x", n)));
  for (int p = 0; p < ens.n_paths(); ++p) {
    for (int k = 0; k <= ens.steps(); ++k) {
      std::vector<double> row{static_cast<double>(p), ens.times[k]};
      for (int d = 0; d < n; ++d) row.push_back(ens.paths[p](d, k));
      paths.row(row);
    }
  }
  if (ens.n_paths() < 2) return;
  const EnsembleStats st = ensemble_stats(ens);
  CsvWriter stats(rep.file(dir / ("stats_" + tag + ".csv")),
                  concat(concat({"t"}, indexed("mean", n)), indexed2("cov", n)));
  for (std::size_t k = 0; k < st.times.size(); ++k) {
    std::vector<double> row{st.times[k]};
    append(row, st.mean[k]);
    append(row, st.cov[k]);
    stats.row(row);
  }
}

// Uniform grid covering every particle of the displacement interpolation at
// the requested times, widened by the bridge spread for noise level eps_max.
std::vector<double> interpolation_grid(const TransitionTable& tbl, const TransportMap1D& map,
                                       const GridDensity& rho0, const std::vector<double>& times,
                                       double eps_max, int n) {
  double lo = rho0.points.front();
  double hi = rho0.points.back();
  for (double t : times) {
    const Interpolant it = displacement_interp(tbl, map, rho0, t, rho0.points);
    const auto [a, b] = std::minmax_element(it.positions.begin(), it.positions.end());
    lo = std::min(lo, *a);
    hi = std::max(hi, *b);
  }
  double spread = 0.0;
  for (double t : times) {
    spread = std::max({spread, tbl.from_origin(t).gramian(0, 0), tbl.to_terminal(t).gramian(0, 0)});
  }
  const double margin = 0.05 * (hi - lo) + 4.0 * std::sqrt(eps_max * spread);
  return GridDensity::uniform_grid(lo - margin, hi + margin, n).points;
}

SinkhornOptions solver_options(const ExperimentConfig& cfg) {
  SinkhornOptions opt;
  opt.tol = cfg.tol;
  return opt;
}

void write_gaussian_flow(Report& rep, const ExperimentConfig& cfg, const TransitionTable& tbl,
                         double eps, const BridgePolicy& policy) {
  const auto& gm = *cfg.gaussian;
  const int n = tbl.dim();
  const MomentFlow flow = moment_flow(tbl, policy, gm.initial, gm.final);
  CsvWriter w(rep.file(cfg.output_dir / ("moment_flow_" + epsilon_tag(eps) + ".csv")),
              concat(concat(concat({"t"}, indexed("n", n)), indexed2("sigma", n)), indexed2("pi", n)));
  for (std::size_t k = 0; k < flow.grid.size(); ++k) {
    std::vector<double> row{flow.grid[k]};
    append(row, flow.mean[k]);
    append(row, flow.cov[k]);
    append(row, policy.pi_flow[k]);
    w.row(row);
  }
  rep.line("eps=" + fmt(eps) + ": |n(1)-m1| = " + fmt((flow.mean.back() - gm.final.mean).norm()) +
           ", |Sigma(1)-Sigma1| = " + fmt((flow.cov.back() - gm.final.cov).norm()));
}

CommandResult cmd_gramian(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  const int n = tbl.dim();
  CsvWriter w(rep.file(cfg.output_dir / "gramian.csv"),
              concat(concat({"t"}, indexed2("phi", n)), indexed2("m", n)));
  for (int k = 0; k <= tbl.steps(); ++k) {
    std::vector<double> row{tbl.grid()[k]};
    append(row, tbl.phi(k));
    append(row, tbl.gramian(k));
    w.row(row);
  }
  rep.line("lambda_min(M10) = " + format_double(tbl.lambda_min_m10()));
  return res;
}

CommandResult cmd_gauss_bridge(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const auto& gm = need_gaussian(cfg, "gauss-bridge");
  need_epsilon(cfg, "gauss-bridge");
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  for (double eps : cfg.epsilon) {
    const BridgePolicy policy = solve_gaussian_bridge(tbl, eps, gm.initial, gm.final);
    write_gaussian_flow(rep, cfg, tbl, eps, policy);
    if (cfg.paths > 0) {
      write_ensemble(rep, cfg.output_dir, epsilon_tag(eps),
                     simulate_gauss_bridge(tbl, policy, gm.initial, eps, cfg.paths,
                                           cfg.sample_steps, cfg.seed));
    }
  }
  return res;
}

CommandResult cmd_omt1d(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const auto& gm = need_grid(cfg, "omt1d");
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  const TransportMap1D map = omt_map_1d(tbl, gm.initial, gm.final);
  if (!map.nondecreasing()) {
    throw Error(ErrorKind::Singular, "computed transport map is not nondecreasing");
  }
  CsvWriter mw(rep.file(cfg.output_dir / "map.csv"), {"x", "tx"});
  for (std::size_t i = 0; i < map.x.size(); ++i) mw.row({map.x[i], map.tx[i]});

  const auto eval = interpolation_grid(tbl, map, gm.initial, cfg.times, 0.0, cfg.eval_points);
  CsvWriter fw(rep.file(cfg.output_dir / "flow.csv"), {"t", "x", "rho"});
  CsvWriter pw(rep.file(cfg.output_dir / "particles.csv"), {"particle", "t", "x", "mass"});
  for (double t : cfg.times) {
    const Interpolant it = displacement_interp(tbl, map, gm.initial, t, eval);
    for (std::size_t i = 0; i < eval.size(); ++i) fw.row({t, eval[i], it.density.weights[i]});
    for (std::size_t p = 0; p < it.positions.size(); ++p) {
      pw.row({static_cast<double>(p), t, it.positions[p], it.masses[p]});
    }
  }
  const ReducedMarginals red = reduce_marginals(tbl, gm.initial, gm.final);
  rep.line("transport cost = " + format_double(transport_cost(tbl, map, gm.initial)));
  rep.line("reduced-coordinate cost = " +
           format_double(hatted_transport_cost(monotone_map_1d(red.rho0_hat, red.rho1_hat),
                                               red.rho0_hat)));
  return res;
}

CommandResult cmd_sinkhorn(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const auto& gm = need_grid(cfg, "sinkhorn");
  need_epsilon(cfg, "sinkhorn");
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  const TransportMap1D map = omt_map_1d(tbl, gm.initial, gm.final);
  SinkhornOptions opt = solver_options(cfg);
  opt.trace_every = 1;
  for (double eps : cfg.epsilon) {
    if (eps == 0.0) {
      rep.line("eps=0 skipped: the zero-noise limit is the omt1d command");
      continue;
    }
    const std::string tag = epsilon_tag(eps);
    const BridgeSolution sol = solve_bridge(tbl, eps, gm.initial, gm.final, opt);
    const DiscreteCoupling pi = coupling(sol.kernel, sol.pair, sol.mu0, sol.mu1);
    CsvWriter cw(rep.file(cfg.output_dir / ("coupling_" + tag + ".csv")), {"i", "j", "x", "y", "pi"});
    for (Eigen::Index i = 0; i < pi.mass.rows(); ++i) {
      for (Eigen::Index j = 0; j < pi.mass.cols(); ++j) {
        cw.row({static_cast<double>(i), static_cast<double>(j), pi.source_points[i],
                pi.target_points[j], pi.mass(i, j)});
      }
    }
    CsvWriter pw(rep.file(cfg.output_dir / ("potentials_" + tag + ".csv")),
                 {"side", "index", "point", "log_phi"});
    for (Eigen::Index i = 0; i < sol.pair.log_phi_hat_0.size(); ++i) {
      pw.row({0.0, static_cast<double>(i), sol.mu0.points(i, 0), sol.pair.log_phi_hat_0[i]});
    }
    for (Eigen::Index j = 0; j < sol.pair.log_phi_1.size(); ++j) {
      pw.row({1.0, static_cast<double>(j), sol.mu1.points(j, 0), sol.pair.log_phi_1[j]});
    }
    CsvWriter tw(rep.file(cfg.output_dir / ("trace_" + tag + ".csv")), {"iteration", "residual"});
    for (const auto& [it, r] : sol.pair.trace) tw.row({static_cast<double>(it), r});

    const auto eval = interpolation_grid(tbl, map, gm.initial, cfg.times, eps, cfg.eval_points);
    CsvWriter iw(rep.file(cfg.output_dir / ("interp_" + tag + ".csv")), {"t", "x", "rho"});
    for (double t : cfg.times) {
      const GridDensity rho = entropic_interpolation(tbl, sol, t, eval, gm.initial, gm.final);
      for (std::size_t i = 0; i < rho.size(); ++i) iw.row({t, rho.points[i], rho.weights[i]});
    }
    rep.line("eps=" + fmt(eps) + ": " + std::to_string(sol.pair.iterations) +
             " iterations, residual " + fmt(sol.pair.residual));
  }
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const auto& gm = need_grid(cfg, "sweep");
  need_epsilon(cfg, "sweep");
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  SweepOptions opt;
  opt.solver = solver_options(cfg);
  opt.t_star = cfg.t_star;
  opt.eval_points = cfg.eval_points;
  const SweepResult sweep = zero_noise_sweep(tbl, gm.initial, gm.final, cfg.epsilon, opt);
  CsvWriter sw(rep.file(cfg.output_dir / "sweep.csv"),
               {"epsilon", "coupling_distance", "flow_distance", "iterations", "residual"});
  std::vector<double> cd, fd;
  for (const auto& r : sweep.rows) {
    sw.row({r.epsilon, r.coupling_distance, r.flow_distance, static_cast<double>(r.iterations),
            r.residual});
    cd.push_back(r.coupling_distance);
    fd.push_back(r.flow_distance);
    rep.line("eps=" + fmt(r.epsilon) + ": coupling distance " + fmt(r.coupling_distance) +
             ", flow distance " + fmt(r.flow_distance) + ", " + std::to_string(r.iterations) +
             " iterations");
  }
  CsvWriter fw(rep.file(cfg.output_dir / "sweep_flows.csv"), {"epsilon", "x", "rho"});
  for (std::size_t i = 0; i < sweep.eval_points.size(); ++i) {
    fw.row({0.0, sweep.eval_points[i], sweep.omt_flow.weights[i]});
  }
  for (std::size_t e = 0; e < sweep.rows.size(); ++e) {
    for (std::size_t i = 0; i < sweep.eval_points.size(); ++i) {
      fw.row({sweep.rows[e].epsilon, sweep.eval_points[i], sweep.entropic_flows[e].weights[i]});
    }
  }
  rep.line(std::string("coupling distance nonincreasing (10% slack): ") +
           (nonincreasing_with_slack(cd) ? "yes" : "no"));
  rep.line(std::string("flow distance nonincreasing (10% slack): ") +
           (nonincreasing_with_slack(fd) ? "yes" : "no"));
  return res;
}

CommandResult cmd_sample_paths(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  need_epsilon(cfg, "sample-paths");
  if (cfg.paths < 1) throw Error(ErrorKind::Config, "sample-paths needs paths >= 1");
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  for (double eps : cfg.epsilon) {
    const std::string tag = epsilon_tag(eps);
    if (cfg.gaussian) {
      const auto& gm = *cfg.gaussian;
      const BridgePolicy policy = solve_gaussian_bridge(tbl, eps, gm.initial, gm.final);
      write_ensemble(rep, cfg.output_dir, tag,
                     simulate_gauss_bridge(tbl, policy, gm.initial, eps, cfg.paths,
                                           cfg.sample_steps, cfg.seed));
      continue;
    }
    // Endpoint pairs from the coupling (or the transport map at eps = 0),
    // joined by pinned bridges of the prior.
    const auto& gm = *cfg.grid1d;
    Eigen::MatrixXd xs(1, cfg.paths), ys(1, cfg.paths);
    std::mt19937_64 rng(path_seed(cfg.seed, 0xfeedULL));
    if (eps > 0.0) {
      const BridgeSolution sol = solve_bridge(tbl, eps, gm.initial, gm.final, solver_options(cfg));
      const DiscreteCoupling pi = coupling(sol.kernel, sol.pair, sol.mu0, sol.mu1);
      std::discrete_distribution<Eigen::Index> pick(pi.mass.data(), pi.mass.data() + pi.mass.size());
      for (int p = 0; p < cfg.paths; ++p) {
        const Eigen::Index flat = pick(rng);
        xs(0, p) = pi.source_points[flat % pi.mass.rows()];
        ys(0, p) = pi.target_points[flat / pi.mass.rows()];
      }
    } else {
      const TransportMap1D map = omt_map_1d(tbl, gm.initial, gm.final);
      const std::vector<double> m = gm.initial.masses();
      std::discrete_distribution<std::size_t> pick(m.begin(), m.end());
      for (int p = 0; p < cfg.paths; ++p) {
        const std::size_t i = pick(rng);
        xs(0, p) = map.x[i];
        ys(0, p) = map.tx[i];
      }
    }
    write_ensemble(rep, cfg.output_dir, tag,
                   simulate_pinned_bridges(tbl, xs, ys, eps, cfg.sample_steps, cfg.seed));
  }
  return res;
}

void check_gaussian(Report& rep, const ExperimentConfig& cfg, const TransitionTable& tbl) {
  const auto& gm = *cfg.gaussian;
  const int n = tbl.dim();
  std::vector<double> eps_list = cfg.epsilon;
  if (std::find(eps_list.begin(), eps_list.end(), 0.0) == eps_list.end()) eps_list.push_back(0.0);
  for (double eps : eps_list) {
    const BridgePolicy policy = solve_gaussian_bridge(tbl, eps, gm.initial, gm.final);
    const MomentFlow flow = moment_flow(tbl, policy, gm.initial, gm.final);
    rep.below("endpoint mean error eps=" + fmt(eps),
              (flow.mean.back() - gm.final.mean).cwiseAbs().maxCoeff(), 1e-5);
    rep.below("endpoint covariance error eps=" + fmt(eps),
              (flow.cov.back() - gm.final.cov).cwiseAbs().maxCoeff(), 1e-5);
    if (eps != 0.0) continue;
    double worst = 0.0;
    for (int k = 1; k <= tbl.steps(); ++k) {
      const Eigen::MatrixXd closed = pi_zero_explicit(tbl, gm.initial, gm.final, tbl.grid()[k]);
      worst = std::max(worst, (closed - policy.pi_flow[k]).cwiseAbs().maxCoeff());
    }
    rep.below("Riccati closed form vs RK4 flow", worst, 1e-5);
    double lo = 0.0, hi = 0.0;
    for (const auto* s : {&gm.initial, &gm.final}) {
      const double spread = 3.0 * std::sqrt(s->cov.diagonal().maxCoeff());
      lo = std::min(lo, s->mean.minCoeff() - spread);
      hi = std::max(hi, s->mean.maxCoeff() + spread);
    }
    const int per_dim = n <= 3 ? 21 : 5;
    rep.below("HJ residual (eps=0)",
              hj_residual_gaussian(tbl, policy, make_hj_probe(policy, 21, lo, hi, per_dim)), 1e-4);
  }
}

void check_grid(Report& rep, const ExperimentConfig& cfg, const TransitionTable& tbl) {
  const auto& gm = *cfg.grid1d;
  const TransportMap1D map = omt_map_1d(tbl, gm.initial, gm.final);
  rep.check("transport map nondecreasing", map.nondecreasing() ? 1.0 : 0.0, 1.0,
            map.nondecreasing());

  // F1(T(x_i)) against F0(x_i), both from the piecewise-linear edge CDFs.
  const GridDensity r0 = gm.initial.normalized();
  const GridDensity r1 = gm.final.normalized();
  const std::vector<double> f0 = r0.edge_cdf();
  const std::vector<double> f1 = r1.edge_cdf();
  const double h1 = r1.spacing();
  auto cdf1 = [&](double y) {
    const double pos = (y - r1.lower_edge()) / h1;
    if (pos <= 0.0) return 0.0;
    if (pos >= static_cast<double>(r1.size())) return 1.0;
    const auto k = static_cast<std::size_t>(pos);
    return f1[k] + (pos - static_cast<double>(k)) * (f1[k + 1] - f1[k]);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < map.x.size(); ++i) {
    worst = std::max(worst, std::abs(cdf1(map.tx[i]) - 0.5 * (f0[i] + f0[i + 1])));
  }
  const std::vector<double> m1 = r1.masses();
  rep.below("pushforward CDF mismatch", worst, 2.0 * *std::max_element(m1.begin(), m1.end()));

  const ReducedMarginals red = reduce_marginals(tbl, gm.initial, gm.final);
  const double lifted = transport_cost(tbl, map, gm.initial);
  const double hatted = hatted_transport_cost(monotone_map_1d(red.rho0_hat, red.rho1_hat),
                                              red.rho0_hat);
  rep.below("lifted vs reduced cost", std::abs(lifted - hatted), 1e-8);

  const SinkhornOptions opt = solver_options(cfg);
  for (double eps : cfg.epsilon) {
    if (eps == 0.0) continue;
    const BridgeSolution sol = solve_bridge(tbl, eps, gm.initial, gm.final, opt);
    const auto [row, col] =
        marginal_residuals(coupling(sol.kernel, sol.pair, sol.mu0, sol.mu1), sol.mu0, sol.mu1);
    rep.below("Sinkhorn marginal residual eps=" + fmt(eps), std::max(row, col), cfg.tol);
    rep.below("potential transform eps=" + fmt(eps), potential_transform_check(tbl, sol, opt).residual(),
              10.0 * cfg.tol);
  }
}

CommandResult cmd_check(const ExperimentConfig& cfg) {
  CommandResult res;
  Report rep(res);
  const TransitionTable tbl = TransitionTable::build(*cfg.system, cfg.steps);
  rep.check("controllability lambda_min(M10)", tbl.lambda_min_m10(), kControllabilityTol,
            tbl.lambda_min_m10() > kControllabilityTol);
  const double asym = (tbl.m10() - tbl.m10().transpose()).cwiseAbs().maxCoeff();
  rep.below("Gramian asymmetry", asym, 1e-12);
  if (cfg.gaussian) check_gaussian(rep, cfg, tbl);
  if (cfg.grid1d) check_grid(rep, cfg, tbl);
  return res;
}

}  // namespace

CommandResult run_command(const std::string& name, const ExperimentConfig& cfg) {
  static const std::map<std::string, std::function<CommandResult(const ExperimentConfig&)>> table{
      {"gramian", cmd_gramian},   {"gauss-bridge", cmd_gauss_bridge},
      {"omt1d", cmd_omt1d},       {"sinkhorn", cmd_sinkhorn},
      {"sweep", cmd_sweep},       {"sample-paths", cmd_sample_paths},
      {"check", cmd_check}};
  const auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorKind::Config, "unknown command \"" + name + "\"");
  if (!cfg.system) throw Error(ErrorKind::Config, "config has no system");
  return it->second(cfg);
}

}  // namespace bridgeflow::cli
