#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bridgeflow/errors.hpp"
#include "bridgeflow/gauss_bridge.hpp"
#include "bridgeflow/matrix_functions.hpp"
#include "test_systems.hpp"

using namespace bridgeflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GaussianState scalar_state(double mean, double var) {
  return testsys::gaussian(testsys::vec({mean}), MatrixXd::Constant(1, 1, var));
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(InitialRiccati, ScalarExamples) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto s = scalar_state(0.0, 1.0);
  EXPECT_NEAR(initial_riccati(tbl, 0.0, s, s)(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(initial_riccati(tbl, 2.0, s, s)(0, 0), 2.0 - std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(initial_riccati(tbl, 2.0, s, s)(0, 0), 0.585786, 1e-6);
  EXPECT_NEAR(initial_riccati(tbl, 0.0, s, scalar_state(0.0, 4.0))(0, 0), -1.0, 1e-12);
}

TEST(InitialRiccati, InertialSteeringMatchesHandSimplification) {
  // With Sigma0 = Sigma1 = I the boundary value reduces to
  // Phi10' M10^{-1} Phi10 - (Phi10' M10^{-2} Phi10)^{1/2}.
  MatrixXd phi10(2, 2);
  phi10 << 1.0, 1.0, 0.0, 1.0;
  MatrixXd m10(2, 2);
  m10 << 1.0 / 3.0, 0.5, 0.5, 1.0;
  const MatrixXd m_inv = m10.inverse();
  const MatrixXd g = phi10.transpose() * m_inv * phi10;
  const MatrixXd h = phi10.transpose() * m_inv * m_inv * phi10;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  const MatrixXd expected = g - es.operatorSqrt();

  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  const MatrixXd pi0 =
      initial_riccati(tbl, 0.0, testsys::inertial_initial(), testsys::inertial_final());
  EXPECT_LT(max_abs(pi0 - expected), 1e-9);
  EXPECT_LT(max_abs(pi0 - pi0.transpose()), 1e-14);
}

TEST(InitialRiccati, RejectsSingularCovariance) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 50);
  EXPECT_THROW(initial_riccati(tbl, 0.0, scalar_state(0.0, 0.0), scalar_state(0.0, 1.0)), Error);
  EXPECT_THROW(initial_riccati(tbl, -1.0, scalar_state(0.0, 1.0), scalar_state(0.0, 1.0)), Error);
}

TEST(InitialRiccati, ConvergesAsNoiseVanishes) {
  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  const auto s0 = testsys::inertial_initial();
  const GaussianState s1{testsys::vec({5.0, 5.0}), testsys::vec({2.0, 0.5}).asDiagonal()};
  const MatrixXd limit = initial_riccati(tbl, 0.0, s0, s1);
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1.0, 0.1, 0.01, 0.001}) {
    const double gap = (initial_riccati(tbl, eps, s0, s1) - limit).norm();
    EXPECT_LT(gap, previous) << eps;
    previous = gap;
  }
  EXPECT_LT(previous, 1e-2);
}

TEST(SqrtmPsd, ClampsRoundoffAndRejectsIndefinite) {
  MatrixXd a(2, 2);
  a << 4.0, 0.0, 0.0, -1e-12;
  EXPECT_NEAR(sqrtm_psd(a)(0, 0), 2.0, 1e-14);
  EXPECT_EQ(sqrtm_psd(a)(1, 1), 0.0);
  a(1, 1) = -1e-6;
  try {
    sqrtm_psd(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SqrtFailure);
  }
}

TEST(RiccatiFlow, ZeroIsAFixedPoint) {
  const auto tbl = TransitionTable::build(testsys::time_varying_3x2(), 200);
  const auto policy = riccati_flow(tbl, MatrixXd::Zero(3, 3));
  for (const auto& pi : policy.pi_flow) EXPECT_EQ(max_abs(pi), 0.0);
}

TEST(RiccatiFlow, ScalarSolutionMatchesSeparableOde) {
  // dPi/dt = Pi^2 for A = 0, B = 1, so Pi(t) = p / (1 - p t).
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  for (double p : {-1.0, -3.0, 0.5}) {
    const auto policy = riccati_flow(tbl, MatrixXd::Constant(1, 1, p));
    for (int k = 0; k <= tbl.steps(); k += 20) {
      const double t = tbl.grid()[k];
      EXPECT_NEAR(policy.pi_flow[k](0, 0), p / (1.0 - p * t), 1e-8) << p << " " << t;
    }
  }
}

TEST(RiccatiFlow, FiniteEscapeIsReported) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  try {
    riccati_flow(tbl, MatrixXd::Constant(1, 1, 2.0));
    FAIL() << "expected BlowUp";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BlowUp);
  }
}

TEST(PiZeroExplicit, ScalarCases) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto unit = scalar_state(0.0, 1.0);
  for (double t : {0.1, 0.5, 1.0}) {
    EXPECT_NEAR(pi_zero_explicit(tbl, unit, unit, t)(0, 0), 0.0, 1e-12);
  }
  // Sigma1 = 4: particles spread linearly, x(t) = (1+t) x0, so Pi_0(t) = -1/(1+t).
  const auto wide = scalar_state(0.0, 4.0);
  const auto flow = riccati_flow(tbl, initial_riccati(tbl, 0.0, unit, wide));
  for (int k = 1; k <= tbl.steps(); ++k) {
    const double t = tbl.grid()[k];
    const double explicit_pi = pi_zero_explicit(tbl, unit, wide, t)(0, 0);
    EXPECT_NEAR(explicit_pi, flow.pi_flow[k](0, 0), 1e-6);
    EXPECT_NEAR(explicit_pi, -1.0 / (1.0 + t), 1e-10);
  }
  EXPECT_NEAR(pi_zero_explicit(tbl, unit, wide, 1e-6)(0, 0),
              initial_riccati(tbl, 0.0, unit, wide)(0, 0), 1e-5);
  EXPECT_THROW(pi_zero_explicit(tbl, unit, wide, 0.0), Error);
}

TEST(PiZeroExplicit, AgreesWithRiccatiFlowOnInertialSystem) {
  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  const auto s0 = testsys::inertial_initial();
  const auto s1 = testsys::inertial_final();
  const auto flow = riccati_flow(tbl, initial_riccati(tbl, 0.0, s0, s1));
  double worst = 0.0;
  for (int k = 1; k <= tbl.steps(); ++k) {
    worst = std::max(worst, max_abs(pi_zero_explicit(tbl, s0, s1, tbl.grid()[k]) - flow.pi_flow[k]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(PiZeroExplicit, NearlySingularTargetIsReported) {
  const auto tbl = TransitionTable::build(testsys::trivial(2), 200);
  const auto s0 = testsys::gaussian(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  const auto s1 = testsys::gaussian(VectorXd::Zero(2), testsys::vec({1.0, 1e-30}).asDiagonal());
  try {
    pi_zero_explicit(tbl, s0, s1, 1.0);
    FAIL() << "expected Singular";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Singular);
  }
}

TEST(AffineDrift, TrivialCases) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto s0 = scalar_state(0.0, 1.0);
  const auto s1 = scalar_state(1.0, 1.0);
  auto policy = solve_gaussian_bridge(tbl, 0.0, s0, s1);
  for (int k = 0; k <= tbl.steps(); ++k) {
    EXPECT_NEAR(policy.pi_flow[k](0, 0), 0.0, 1e-14);
    EXPECT_NEAR(policy.m_flow[k][0], 1.0, 1e-12);
  }
  auto still = solve_gaussian_bridge(TransitionTable::build(testsys::trivial(2), 100), 0.0,
                                     testsys::inertial_final(), testsys::inertial_final());
  for (const auto& m : still.m_flow) EXPECT_LT(m.norm(), 1e-12);
}

TEST(MomentFlow, ScalarTrivialCase) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto s0 = scalar_state(0.0, 1.0);
  const auto s1 = scalar_state(1.0, 1.0);
  const auto policy = solve_gaussian_bridge(tbl, 0.0, s0, s1);
  const auto flow = moment_flow(tbl, policy, s0, s1);
  for (int k = 0; k <= tbl.steps(); ++k) {
    EXPECT_NEAR(flow.mean[k][0], tbl.grid()[k], 1e-12);
    EXPECT_NEAR(flow.cov[k](0, 0), 1.0, 1e-12);
  }
}

TEST(MomentFlow, InertialEndpointsForEveryNoiseLevel) {
  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  const auto s0 = testsys::inertial_initial();
  const auto s1 = testsys::inertial_final();
  for (double eps : {9.0, 4.0, 0.01, 0.0}) {
    const auto policy = solve_gaussian_bridge(tbl, eps, s0, s1);
    const auto flow = moment_flow(tbl, policy, s0, s1);
    EXPECT_LT((flow.mean.back() - s1.mean).cwiseAbs().maxCoeff(), 1e-5) << eps;
    EXPECT_LT(max_abs(flow.cov.back() - s1.cov), 1e-5) << eps;
    EXPECT_LT(max_abs(flow.cov.front() - s0.cov), 1e-12) << eps;
    for (const auto& pi : policy.pi_flow) EXPECT_LT(max_abs(pi - pi.transpose()), 1e-10);
  }
}

TEST(MomentFlow, ClosedFormCovarianceSolvesLyapunovEquation) {
  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  const auto s0 = testsys::gaussian(testsys::vec({-5.0, -5.0}),
                                    (MatrixXd(2, 2) << 1.0, 0.3, 0.3, 0.5).finished());
  const auto s1 = testsys::gaussian(testsys::vec({5.0, 5.0}),
                                    (MatrixXd(2, 2) << 2.0, -0.4, -0.4, 1.0).finished());
  const auto policy = solve_gaussian_bridge(tbl, 0.0, s0, s1);
  const auto closed = moment_flow(tbl, policy, s0, s1);
  const auto lyap = lyapunov_covariance_flow(tbl, policy.pi_flow.front(), s0.cov, 0.0);
  double worst = 0.0;
  for (int k = 0; k <= tbl.steps(); ++k) worst = std::max(worst, max_abs(closed.cov[k] - lyap[k]));
  EXPECT_LT(worst, 1e-5);
}

TEST(MomentFlow, MeanMatchesDirectIntegration) {
  // Oracle: integrate dn/dt = (A - BB'Pi) n + BB' m with RK4 on the coarse
  // grid, taking half-step values from a policy solved on a grid twice as fine.
  const auto sys = testsys::time_varying_3x2();
  const auto coarse = TransitionTable::build(sys, 100);
  const auto fine = TransitionTable::build(sys, 200);
  std::mt19937_64 rng(3);
  const GaussianState s0{testsys::random_vector(rng, 3), testsys::random_spd(rng, 3)};
  const GaussianState s1{testsys::random_vector(rng, 3, 3.0), testsys::random_spd(rng, 3)};
  const auto fine_policy = solve_gaussian_bridge(fine, 0.5, s0, s1);
  const auto coarse_flow =
      moment_flow(coarse, solve_gaussian_bridge(coarse, 0.5, s0, s1), s0, s1);
  auto rhs = [&](int fk, const VectorXd& n) {
    const double t = fine.grid()[fk];
    const MatrixXd bb = sys.BBt(t);
    return VectorXd((sys.A(t) - bb * fine_policy.pi_flow[fk]) * n + bb * fine_policy.m_flow[fk]);
  };
  VectorXd n = s0.mean;
  const double h = coarse.dt();
  for (int k = 0; k < coarse.steps(); ++k) {
    const VectorXd k1 = rhs(2 * k, n);
    const VectorXd k2 = rhs(2 * k + 1, n + 0.5 * h * k1);
    const VectorXd k3 = rhs(2 * k + 1, n + 0.5 * h * k2);
    const VectorXd k4 = rhs(2 * k + 2, n + h * k3);
    n += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    EXPECT_LT((n - coarse_flow.mean[k + 1]).norm(), 1e-5) << k;
  }
  EXPECT_LT((n - s1.mean).norm(), 1e-5);
}

TEST(MomentFlow, RandomisedEndpointMatching) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 2 + trial % 2;
    const auto sys = testsys::random_system(rng, n, trial % 3 == 0 ? 1 : 2);
    const auto tbl = TransitionTable::build(sys, 800);
    const GaussianState s0{testsys::random_vector(rng, n, 2.0), testsys::random_spd(rng, n)};
    const GaussianState s1{testsys::random_vector(rng, n, 2.0), testsys::random_spd(rng, n)};
    for (double eps : {0.0, 0.3, 2.0}) {
      const auto policy = solve_gaussian_bridge(tbl, eps, s0, s1);
      const auto flow = moment_flow(tbl, policy, s0, s1);
      EXPECT_LT((flow.mean.back() - s1.mean).norm(), 1e-5) << trial << " " << eps;
      EXPECT_LT(max_abs(flow.cov.back() - s1.cov), 1e-5) << trial << " " << eps;
    }
  }
}

TEST(FeedbackControl, AffineLaw) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto s0 = scalar_state(0.0, 1.0);
  const auto s1 = scalar_state(1.0, 1.0);
  const auto policy = solve_gaussian_bridge(tbl, 0.0, s0, s1);
  for (double t : {0.0, 0.33, 1.0}) {
    for (double x : {-2.0, 0.0, 3.0}) {
      EXPECT_NEAR(feedback_control(tbl, policy, t, testsys::vec({x}))[0], 1.0, 1e-12);
    }
  }
  const auto di = TransitionTable::build(testsys::double_integrator(), 200);
  const auto inertial =
      solve_gaussian_bridge(di, 0.0, testsys::inertial_initial(), testsys::inertial_final());
  const double t = di.grid()[37];
  const VectorXd u0 = feedback_control(di, inertial, t, VectorXd::Zero(2));
  EXPECT_LT((u0 - di.system().B(t).transpose() * inertial.m_flow[37]).norm(), 1e-12);
  const VectorXd xa = testsys::vec({1.0, 2.0});
  const VectorXd xb = testsys::vec({-3.0, 0.5});
  const VectorXd mid = feedback_control(di, inertial, t, 0.5 * (xa + xb));
  EXPECT_LT((mid - 0.5 * (feedback_control(di, inertial, t, xa) +
                          feedback_control(di, inertial, t, xb)))
                .norm(),
            1e-10);
  EXPECT_THROW(feedback_control(di, inertial, 1.2, xa), Error);

  BridgePolicy zero = riccati_flow(tbl, MatrixXd::Zero(1, 1));
  affine_drift(tbl, zero, testsys::vec({0.0}), testsys::vec({0.0}));
  EXPECT_EQ(feedback_control(tbl, zero, 0.4, testsys::vec({2.0}))[0], 0.0);
}

TEST(HamiltonJacobi, TrivialScalarResidual) {
  const auto tbl = TransitionTable::build(testsys::scalar(0.0, 1.0), 200);
  const auto policy =
      solve_gaussian_bridge(tbl, 0.0, scalar_state(0.0, 1.0), scalar_state(1.0, 1.0));
  EXPECT_LT(hj_residual_gaussian(tbl, policy, make_hj_probe(policy, 21, -3.0, 3.0, 21)), 1e-6);
}

TEST(HamiltonJacobi, InertialResidualAndNegativeControl) {
  const auto tbl = TransitionTable::build(testsys::double_integrator(), 200);
  auto policy =
      solve_gaussian_bridge(tbl, 0.0, testsys::inertial_initial(), testsys::inertial_final());
  const auto probe = make_hj_probe(policy, 21, -8.0, 8.0, 21);
  EXPECT_EQ(probe.points.size() * probe.time_indices.size(), 21u * 21u * 21u);
  EXPECT_LT(hj_residual_gaussian(tbl, policy, probe), 1e-4);
  for (auto& pi : policy.pi_flow) pi += 0.1 * MatrixXd::Identity(2, 2);
  EXPECT_GT(hj_residual_gaussian(tbl, policy, probe), 1e-2);
}

TEST(HamiltonJacobi, KinkedTabulatedInputStaysAccurate) {
  // B(t) has a corner at t=0.5, where psi is only C1 in time.
  const MatrixXd a = (MatrixXd(2, 2) << 0.0, 1.0, 0.0, 0.0).finished();
  const MatrixXd b1 = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  const LinearSystem sys(MatrixFunction::constant(a),
                         MatrixFunction::tabulated({0.0, 0.5, 1.0}, {b1, 2.0 * b1, b1}));
  const auto tbl = TransitionTable::build(sys, 200);
  const auto policy =
      solve_gaussian_bridge(tbl, 0.0, testsys::inertial_initial(), testsys::inertial_final());
  EXPECT_LT(hj_residual_gaussian(tbl, policy, make_hj_probe(policy, 21, -8.0, 8.0, 21)), 1e-4);
}
