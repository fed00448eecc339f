#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bridgeflow/builtin_densities.hpp"
#include "bridgeflow/errors.hpp"
#include "bridgeflow/gauss_bridge.hpp"
#include "bridgeflow/omt_core.hpp"
#include "marginal_oracles.hpp"
#include "test_systems.hpp"

using namespace bridgeflow;

namespace {

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

GridDensity normal_grid(double mean, double sd, double lo, double hi, int n) {
  return GridDensity::sample(lo, hi, n, [=](double x) { return normal_pdf(x, mean, sd); })
      .normalized();
}

std::pair<double, double> moments(const GridDensity& rho) {
  const auto m = rho.masses();
  double mean = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) mean += m[i] * rho.points[i];
  double var = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) var += m[i] * std::pow(rho.points[i] - mean, 2);
  return {mean, var};
}

double max_cell_mass(const GridDensity& rho) {
  const auto m = rho.masses();
  return *std::max_element(m.begin(), m.end());
}

const TransitionTable& free_table() {
  static const TransitionTable tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  return tbl;
}

const TransitionTable& damped_table() {
  static const TransitionTable tbl = TransitionTable::build(testsys::scalar(-2.0, 1.0), 200);
  return tbl;
}

}  // namespace

TEST(GridDensity, ValidationAndNormalization) {
  GridDensity bad{{0.0, 1.0, 3.0}, {1.0, 1.0, 1.0}};
  EXPECT_THROW(bad.validate(), Error);
  GridDensity neg{{0.0, 1.0, 2.0}, {1.0, -1.0, 1.0}};
  EXPECT_THROW(neg.validate(), Error);
  GridDensity zero{{0.0, 1.0, 2.0}, {0.0, 0.0, 0.0}};
  try {
    zero.normalized();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySupport);
  }
  const auto rho = GridDensity::sample(0.0, 1.0, 10, [](double) { return 3.0; }).normalized();
  EXPECT_NEAR(rho.total_mass(), 1.0, 1e-15);
  EXPECT_NEAR(rho.lower_edge(), 0.0, 1e-15);
}

TEST(BuiltinDensities, PiecewiseCosineHasUnitMassAndMirrorSymmetry) {
  EXPECT_NEAR(piecewise_cosine_rho0(0.3), (0.4 - 0.2 * std::cos(0.9 * std::numbers::pi)) / 2.0,
              1e-15);
  EXPECT_NEAR(piecewise_cosine_rho1(0.2), piecewise_cosine_rho0(0.8), 1e-15);
  EXPECT_NEAR(oracle::cosine_cdf0(1.0), 1.0, 1e-15);
  const auto rho0 = builtin_density("piecewise_cosine_rho0", 1024);
  ASSERT_TRUE(rho0.has_value());
  EXPECT_NEAR(rho0->total_mass(), 1.0, 1e-12);
  // The midpoint rule on 1024 cells already carries almost all of the mass.
  const auto raw = GridDensity::sample(0.0, 1.0, 1024, piecewise_cosine_rho0);
  EXPECT_NEAR(raw.total_mass(), 1.0, 1e-5);
  EXPECT_FALSE(builtin_density("nope", 10).has_value());
}

TEST(ReduceMarginals, IdentityForFreeMotion) {
  const auto rho = normal_grid(0.3, 0.7, -4.0, 4.0, 201);
  const auto red = reduce_marginals(free_table(), rho, rho);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    EXPECT_NEAR(red.rho0_hat.points[i], rho.points[i], 1e-12);
    EXPECT_NEAR(red.rho0_hat.weights[i], rho.weights[i], 1e-10);
    EXPECT_NEAR(red.rho1_hat.weights[i], rho.weights[i], 1e-10);
  }
}

TEST(ReduceMarginals, GaussianChangeOfVariablesForDampedSystem) {
  const double phi10 = std::exp(-2.0);
  const double m10 = (1.0 - std::exp(-4.0)) / 4.0;
  const auto rho = normal_grid(0.0, 1.0, -7.0, 7.0, 2801);
  const auto red = reduce_marginals(damped_table(), rho, rho);
  const auto [mean0, var0] = moments(red.rho0_hat);
  EXPECT_NEAR(mean0, 0.0, 1e-12);
  EXPECT_NEAR(var0, phi10 * phi10 / m10, 1e-4 * phi10 * phi10 / m10);
  const auto [mean1, var1] = moments(red.rho1_hat);
  EXPECT_NEAR(var1, 1.0 / m10, 1e-4 / m10);
  EXPECT_NEAR(red.rho0_hat.total_mass(), 1.0, 1e-12);

  const auto [g0, g1] = reduce_gaussian(damped_table(), testsys::gaussian(testsys::vec({1.0}),
                                                                          Eigen::MatrixXd::Ones(1, 1)),
                                        testsys::gaussian(testsys::vec({1.0}),
                                                          Eigen::MatrixXd::Ones(1, 1)));
  EXPECT_NEAR(g0.cov(0, 0), phi10 * phi10 / m10, 1e-8);
  EXPECT_NEAR(g0.mean[0], phi10 / std::sqrt(m10), 1e-8);
  EXPECT_NEAR(g1.mean[0], 1.0 / std::sqrt(m10), 1e-8);
}

TEST(ReduceMarginals, PreservesMassOfPiecewiseCosine) {
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", 1024);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", 1024);
  const auto red = reduce_marginals(damped_table(), rho0, rho1);
  EXPECT_NEAR(red.rho0_hat.total_mass(), 1.0, 1e-9);
  EXPECT_NEAR(red.rho1_hat.total_mass(), 1.0, 1e-9);
  EXPECT_THROW(reduce_marginals(TransitionTable::build(testsys::trivial(2), 50), rho0, rho1), Error);
}

TEST(Quantile, PlateauReturnsLeftEnd) {
  GridDensity rho{{0.5, 1.5, 2.5, 3.5}, {0.5, 0.0, 0.0, 0.5}};
  const auto cdf = rho.edge_cdf();
  EXPECT_DOUBLE_EQ(quantile(rho, cdf, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(quantile(rho, cdf, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(quantile(rho, cdf, 0.75), 3.5);
  EXPECT_DOUBLE_EQ(quantile(rho, cdf, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(quantile(rho, cdf, 1.0), 4.0);
}

TEST(MonotoneMap, IdentityForEqualMarginals) {
  const auto rho = normal_grid(0.0, 1.0, -5.0, 5.0, 500);
  const auto map = monotone_map_1d(rho, rho);
  for (std::size_t i = 0; i < rho.size(); ++i) EXPECT_NEAR(map.tx[i], map.x[i], 1e-9);
  EXPECT_TRUE(map.nondecreasing());
  GridDensity empty{{0.0, 1.0}, {0.0, 0.0}};
  EXPECT_THROW(monotone_map_1d(empty, rho), Error);
}

TEST(MonotoneMap, GaussianQuantileMap) {
  const auto src = normal_grid(0.0, 1.0, -8.0, 8.0, 4001);
  const auto dst = normal_grid(2.0, 2.0, -14.0, 18.0, 4001);
  const auto map = monotone_map_1d(src, dst);
  EXPECT_TRUE(map.nondecreasing());
  double worst = 0.0;
  for (std::size_t i = 0; i < map.x.size(); ++i) {
    if (std::abs(map.x[i]) <= 3.0) worst = std::max(worst, std::abs(map.tx[i] - (2.0 + 2.0 * map.x[i])));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(MonotoneMap, PiecewiseCosineAgreesWithBisectionOracle) {
  // Oracle: cumulative sums of the densities on 10^6 cells, inverted by bisection.
  const int fine = 1000000;
  std::vector<double> f0(fine + 1, 0.0);
  std::vector<double> f1(fine + 1, 0.0);
  for (int i = 0; i < fine; ++i) {
    const double x = (i + 0.5) / fine;
    f0[i + 1] = f0[i] + piecewise_cosine_rho0(x) / fine;
    f1[i + 1] = f1[i] + piecewise_cosine_rho1(x) / fine;
  }
  auto fine_cdf = [&](const std::vector<double>& f, double x) {
    const double pos = std::clamp(x, 0.0, 1.0) * fine;
    const auto k = std::min(static_cast<int>(pos), fine - 1);
    return (f[k] + (pos - k) * (f[k + 1] - f[k])) / f.back();
  };
  const double target = oracle::bisect_inverse([&](double y) { return fine_cdf(f1, y); },
                                               fine_cdf(f0, 0.5), 0.0, 1.0);

  const auto map = monotone_map_1d(*builtin_density("piecewise_cosine_rho0", 1024),
                                   *builtin_density("piecewise_cosine_rho1", 1024));
  EXPECT_NEAR(map(0.5), target, 1e-4);
  EXPECT_TRUE(map.nondecreasing());
}

TEST(MonotoneMap, PushforwardMatchesAnalyticCdfs) {
  const int n = 1024;
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", n);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", n);
  const auto map = omt_map_1d(damped_table(), rho0, rho1);
  const double cells = 2.0 * max_cell_mass(rho1);
  double worst = 0.0;
  for (std::size_t i = 0; i < map.x.size(); ++i) {
    worst = std::max(worst, std::abs(oracle::cosine_cdf1(map.tx[i]) - oracle::cosine_cdf0(map.x[i])));
  }
  EXPECT_LT(worst, cells);
  EXPECT_LT(worst, 1e-4);
}

TEST(LiftMap, FreeMotionLeavesMapUnchanged) {
  const auto rho0 = normal_grid(0.0, 1.0, -6.0, 6.0, 601);
  const auto rho1 = normal_grid(1.0, 0.5, -4.0, 6.0, 601);
  const auto t_hat = monotone_map_1d(rho0, rho1);
  const auto lifted = lift_map(free_table(), t_hat);
  for (std::size_t i = 0; i < t_hat.x.size(); ++i) {
    EXPECT_NEAR(lifted.x[i], t_hat.x[i], 1e-12);
    EXPECT_NEAR(lifted.tx[i], t_hat.tx[i], 1e-12);
  }
}

TEST(LiftMap, DampedSystemSubstitution) {
  const double phi10 = std::exp(-2.0);
  const double sqrt_m = std::sqrt((1.0 - std::exp(-4.0)) / 4.0);
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", 512);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", 512);
  const auto red = reduce_marginals(damped_table(), rho0, rho1);
  const auto t_hat = monotone_map_1d(red.rho0_hat, red.rho1_hat);
  const auto lifted = lift_map(damped_table(), t_hat);
  for (double x : {0.1, 0.4, 0.77, 0.95}) {
    EXPECT_NEAR(lifted(x), sqrt_m * t_hat(phi10 * x / sqrt_m), 1e-8) << x;
  }
  // In one dimension the cost is convex in y - Phi10 x, so the optimal map is
  // also the direct monotone rearrangement.
  const auto direct = monotone_map_1d(rho0, rho1);
  for (std::size_t i = 0; i < direct.x.size(); ++i) {
    EXPECT_NEAR(lifted.tx[i], direct.tx[i], 1e-9);
  }
}

TEST(LiftMap, FreeFlowWhenReducedMarginalsCoincide) {
  const double phi10 = std::exp(-2.0);
  const auto rho0 = normal_grid(0.5, 1.0, -6.5, 7.5, 2001);
  const auto rho1 = normal_grid(0.5 * phi10, phi10, -6.5 * phi10, 7.5 * phi10, 2001);
  const auto map = omt_map_1d(damped_table(), rho0, rho1);
  double worst = 0.0;
  for (std::size_t i = 0; i < map.x.size(); ++i) {
    if (std::abs(map.x[i] - 0.5) < 4.0) worst = std::max(worst, std::abs(map.tx[i] - phi10 * map.x[i]));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Deposit, ConservesMassAndSplitsLinearly) {
  const std::vector<double> grid{0.0, 1.0, 2.0, 3.0};
  const auto rho = deposit({0.25, 2.0, -5.0, 9.0}, {1.0, 2.0, 0.5, 0.25}, grid);
  EXPECT_NEAR(rho.total_mass(), 3.75, 1e-15);
  EXPECT_DOUBLE_EQ(rho.weights[0], 0.75 + 0.5);
  EXPECT_DOUBLE_EQ(rho.weights[1], 0.25);
  EXPECT_DOUBLE_EQ(rho.weights[2], 2.0);
  EXPECT_DOUBLE_EQ(rho.weights[3], 0.25);
}

TEST(DisplacementInterp, FreeMotionIsLinearInTime) {
  const auto rho0 = normal_grid(0.0, 1.0, -5.0, 5.0, 401);
  const auto rho1 = normal_grid(3.0, 0.5, -1.0, 6.0, 401);
  const auto map = monotone_map_1d(rho0, rho1);
  const auto eval = GridDensity::uniform_grid(-6.0, 8.0, 701).points;
  for (double t : {0.0, 0.3, 0.5, 1.0}) {
    const auto interp = displacement_interp(free_table(), map, rho0, t, eval);
    for (std::size_t i = 0; i < rho0.size(); ++i) {
      EXPECT_NEAR(interp.positions[i], (1.0 - t) * rho0.points[i] + t * map.tx[i], 1e-9);
    }
    EXPECT_NEAR(interp.density.total_mass(), 1.0, 1e-12);
  }
  EXPECT_THROW(displacement_interp(free_table(), map, rho0, 1.5, eval), Error);
}

TEST(DisplacementInterp, EndpointsReproduceMarginals) {
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", 1024);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", 1024);
  const auto map = omt_map_1d(damped_table(), rho0, rho1);
  const auto start = displacement_interp(damped_table(), map, rho0, 0.0, rho0.points);
  for (std::size_t i = 0; i < rho0.size(); ++i) {
    EXPECT_NEAR(start.density.weights[i], rho0.weights[i], 1e-9);
  }
  const auto end = displacement_interp(damped_table(), map, rho0, 1.0, rho1.points);
  EXPECT_LE(cdf_sup_distance(end.density, rho1), 2.0 * max_cell_mass(rho1));
}

TEST(DisplacementInterp, UncontrolledWhenReducedMarginalsCoincide) {
  const double phi10 = std::exp(-2.0);
  const auto rho0 = normal_grid(0.5, 1.0, -6.5, 7.5, 2001);
  const auto rho1 = normal_grid(0.5 * phi10, phi10, -6.5 * phi10, 7.5 * phi10, 2001);
  const auto map = omt_map_1d(damped_table(), rho0, rho1);
  const auto eval = GridDensity::uniform_grid(-7.0, 8.0, 301).points;
  for (double t : {0.25, 0.5, 0.8}) {
    const auto interp = displacement_interp(damped_table(), map, rho0, t, eval);
    const double phi_t = std::exp(-2.0 * t);
    for (std::size_t i = 0; i < rho0.size(); ++i) {
      if (std::abs(rho0.points[i] - 0.5) < 4.0) {
        EXPECT_NEAR(interp.positions[i], phi_t * rho0.points[i], 1e-4);
      }
    }
  }
}

TEST(TransportCost, KnownValues) {
  const auto rho0 = normal_grid(0.0, 1.0, -8.0, 8.0, 2001);
  TransportMap1D free_map{rho0.points, rho0.points};
  for (double& y : free_map.tx) y *= std::exp(-2.0);
  EXPECT_NEAR(transport_cost(damped_table(), free_map, rho0), 0.0, 1e-12);

  const auto rho1 = normal_grid(2.0, 1.0, -6.0, 10.0, 2001);
  const auto map = monotone_map_1d(rho0, rho1);
  EXPECT_NEAR(transport_cost(free_table(), map, rho0), 2.0, 1e-3);
}

TEST(TransportCost, CouplingFormMatchesMapAndChecksMarginals) {
  GridDensity rho0{{0.0, 1.0}, {0.5, 0.5}};
  GridDensity rho1{{0.0, 1.0, 2.0}, {0.25, 0.5, 0.25}};
  DiscreteCoupling pi;
  pi.source_points = rho0.points;
  pi.target_points = rho1.points;
  pi.mass = Eigen::MatrixXd::Zero(2, 3);
  pi.mass << 0.25, 0.25, 0.0, 0.0, 0.25, 0.25;
  // 1/2 [0.25*0 + 0.25*1 + 0.25*0 + 0.25*1]
  EXPECT_NEAR(transport_cost(free_table(), pi, rho0, rho1), 0.25, 1e-12);
  pi.mass(0, 0) += 1e-3;
  try {
    transport_cost(free_table(), pi, rho0, rho1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MassMismatch);
  }
}

TEST(TransportCost, MonotoneBeatsRandomPermutations) {
  // Equal-mass quantile atoms: every permutation of the pairing is a valid
  // coupling of the two empirical marginals.
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", 1024);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", 1024);
  const int atoms = 400;
  std::vector<double> xs;
  std::vector<double> ys;
  const auto f0 = rho0.edge_cdf();
  const auto f1 = rho1.edge_cdf();
  for (int k = 0; k < atoms; ++k) {
    xs.push_back(quantile(rho0, f0, (k + 0.5) / atoms));
    ys.push_back(quantile(rho1, f1, (k + 0.5) / atoms));
  }
  const double phi10 = damped_table().phi10()(0, 0);
  const double m10 = damped_table().m10()(0, 0);
  auto cost = [&](const std::vector<int>& perm) {
    double c = 0.0;
    for (int k = 0; k < atoms; ++k) c += std::pow(ys[perm[k]] - phi10 * xs[k], 2);
    return 0.5 * c / (m10 * atoms);
  };
  std::vector<int> perm(atoms);
  std::iota(perm.begin(), perm.end(), 0);
  const double best = cost(perm);
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_GT(cost(perm), best);
  }
}

TEST(TransportCost, ReductionIsAnExactChangeOfVariables) {
  const auto rho0 = *builtin_density("piecewise_cosine_rho0", 1024);
  const auto rho1 = *builtin_density("piecewise_cosine_rho1", 1024);
  const auto red = reduce_marginals(damped_table(), rho0, rho1);
  const auto t_hat = monotone_map_1d(red.rho0_hat, red.rho1_hat);
  const auto lifted = lift_map(damped_table(), t_hat);
  EXPECT_NEAR(transport_cost(damped_table(), lifted, rho0), hatted_transport_cost(t_hat, red.rho0_hat),
              1e-8);
}

TEST(HopfLax, ConstantAndZeroInitialData) {
  ScalarFieldGrid zero;
  ScalarFieldGrid constant;
  for (int i = 0; i <= 400; ++i) {
    const double y = -4.0 + 0.02 * i;
    zero.points.push_back(testsys::vec({y}));
    zero.values.push_back(0.0);
    constant.points.push_back(testsys::vec({y}));
    constant.values.push_back(1.75);
  }
  for (double t : {0.2, 1.0}) {
    for (double x : {-1.0, 0.0, 0.6}) {
      EXPECT_NEAR(hopf_lax_psi(free_table(), zero, t, testsys::vec({x})), 0.0, 1e-12);
      EXPECT_NEAR(hopf_lax_psi(free_table(), constant, t, testsys::vec({x})), 1.75, 1e-12);
    }
  }
  EXPECT_THROW(hopf_lax_psi(free_table(), zero, 0.0, testsys::vec({0.0})), Error);
}

TEST(HopfLax, QuadraticDataFollowsRiccatiFlow) {
  for (const auto* tbl : {&free_table(), &damped_table()}) {
    const double p = -1.0;
    ScalarFieldGrid psi0;
    for (int i = 0; i <= 8000; ++i) {
      const double y = -4.0 + 1e-3 * i;
      psi0.points.push_back(testsys::vec({y}));
      psi0.values.push_back(-0.5 * p * y * y);
    }
    const auto flow = riccati_flow(*tbl, Eigen::MatrixXd::Constant(1, 1, p));
    for (int k : {40, 100, 200}) {
      const double t = tbl->grid()[k];
      for (double x : {-0.8, 0.0, 0.5}) {
        const double expected = -0.5 * flow.pi_flow[k](0, 0) * x * x;
        EXPECT_NEAR(hopf_lax_psi(*tbl, psi0, t, testsys::vec({x})), expected, 1e-4) << t << " " << x;
      }
    }
  }
}

TEST(HopfLax, TabulatedResidualSmallForHopfLaxAndLargeOtherwise) {
  const auto& tbl = damped_table();
  ScalarFieldGrid psi0;
  for (int i = 0; i <= 6000; ++i) {
    const double y = -3.0 + 1e-3 * i;
    psi0.points.push_back(testsys::vec({y}));
    psi0.values.push_back(0.5 * y * y);
  }
  TabulatedPsi psi;
  TabulatedPsi wrong;
  for (int k = 10; k <= 200; k += 5) psi.times.push_back(tbl.grid()[k]);
  for (int j = 0; j <= 20; ++j) psi.xs.push_back(-0.5 + 0.05 * j);
  psi.values.resize(static_cast<Eigen::Index>(psi.times.size()), static_cast<Eigen::Index>(psi.xs.size()));
  wrong = psi;
  for (std::size_t k = 0; k < psi.times.size(); ++k) {
    for (std::size_t j = 0; j < psi.xs.size(); ++j) {
      psi.values(k, j) = hopf_lax_psi(tbl, psi0, psi.times[k], testsys::vec({psi.xs[j]}));
      wrong.values(k, j) = 0.5 * psi.xs[j] * psi.xs[j];
    }
  }
  EXPECT_LT(hj_residual_grid(tbl, psi), 1e-3);
  EXPECT_GT(hj_residual_grid(tbl, wrong), 5e-2);
}
