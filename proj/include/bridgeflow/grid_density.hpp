#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace bridgeflow {

/// Density values on a uniform, strictly increasing 1-D grid. Point i stands
/// for the cell [x_i - h/2, x_i + h/2], so its mass is weights[i] * h.
struct GridDensity {
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  double spacing() const;
  double total_mass() const;
  std::vector<double> masses() const;
  /// Cumulative mass at the cell edges x_0 - h/2, ..., x_{N-1} + h/2.
  std::vector<double> edge_cdf() const;
  double lower_edge() const { return points.front() - 0.5 * spacing(); }

  /// Throws InvalidArgument for non-uniform grids, negative or non-finite
  /// weights, or fewer than two points.
  void validate() const;
  GridDensity normalized() const;

  /// Samples f at the centres of n cells tiling [lo, hi].
  static GridDensity sample(double lo, double hi, int n, const std::function<double(double)>& f);
  /// n uniformly spaced points from lo to hi inclusive, all weights zero.
  static GridDensity uniform_grid(double lo, double hi, int n);
};

/// Masses pi(i, j) on source_points x target_points.
struct DiscreteCoupling {
  std::vector<double> source_points;
  std::vector<double> target_points;
  Eigen::MatrixXd mass;

  Eigen::VectorXd row_sums() const { return mass.rowwise().sum(); }
  Eigen::VectorXd col_sums() const { return mass.colwise().sum().transpose(); }
};

/// 1-D Wasserstein-1 distance between two densities on the same grid, as the
/// L1 distance between their cumulative masses.
double w1_same_grid(const GridDensity& a, const GridDensity& b);

/// Largest |F_a - F_b| over the shared cell edges.
double cdf_sup_distance(const GridDensity& a, const GridDensity& b);

}  // namespace bridgeflow
