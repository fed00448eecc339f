#pragma once

#include <Eigen/Dense>

namespace bridgeflow {

/// Eigenvalues in (-kClampTol, 0) are treated as roundoff and clamped to zero
/// before taking square roots.
inline constexpr double kClampTol = 1e-10;

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Throws Error(SqrtFailure) if an eigenvalue is below -kClampTol.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

/// Inverse principal square root of a symmetric positive definite matrix.
Eigen::MatrixXd inv_sqrtm_spd(const Eigen::MatrixXd& a);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

/// 2-norm condition number from singular values.
double condition_number(const Eigen::MatrixXd& a);

bool all_finite(const Eigen::MatrixXd& a);

}  // namespace bridgeflow
