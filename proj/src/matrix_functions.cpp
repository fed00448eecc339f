#include "bridgeflow/matrix_functions.hpp"

#include <cmath>
#include <limits>

#include "bridgeflow/errors.hpp"

namespace bridgeflow {

namespace {

Eigen::VectorXd clamped_spectrum(const Eigen::VectorXd& values) {
  Eigen::VectorXd out = values;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] < -kClampTol) {
      throw Error(ErrorKind::SqrtFailure,
                  "matrix under square root has eigenvalue " + std::to_string(out[i]));
    }
    if (out[i] < 0.0) out[i] = 0.0;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::SqrtFailure, "eigendecomposition failed");
  }
  const Eigen::VectorXd lambda = clamped_spectrum(es.eigenvalues()).cwiseSqrt();
  return symmetrize(es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose());
}

Eigen::MatrixXd inv_sqrtm_spd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorKind::SqrtFailure, "matrix is not positive definite");
  }
  const Eigen::VectorXd lambda = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return symmetrize(es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double condition_number(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  const double smallest = s[s.size() - 1];
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smallest;
}

bool all_finite(const Eigen::MatrixXd& a) { return a.allFinite(); }

}  // namespace bridgeflow
