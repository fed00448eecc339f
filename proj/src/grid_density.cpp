#include "bridgeflow/grid_density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bridgeflow/errors.hpp"

namespace bridgeflow {

namespace {

constexpr double kUniformTol = 1e-9;

void require_same_grid(const GridDensity& a, const GridDensity& b) {
  if (a.size() != b.size() ||
      std::abs(a.points.front() - b.points.front()) > kUniformTol * std::abs(a.spacing()) ||
      std::abs(a.spacing() - b.spacing()) > kUniformTol * a.spacing()) {
    throw Error(ErrorKind::InvalidArgument, "densities live on different grids");
  }
}

}  // namespace

double GridDensity::spacing() const {
  if (points.size() < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least two points");
  return (points.back() - points.front()) / static_cast<double>(points.size() - 1);
}

double GridDensity::total_mass() const {
  double sum = 0.0;
  for (double w : weights) sum += w;
  return sum * spacing();
}

std::vector<double> GridDensity::masses() const {
  const double h = spacing();
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] * h;
  return out;
}

std::vector<double> GridDensity::edge_cdf() const {
  const double h = spacing();
  std::vector<double> cdf(weights.size() + 1, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) cdf[i + 1] = cdf[i] + weights[i] * h;
  return cdf;
}

void GridDensity::validate() const {
  if (points.size() < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least two points");
  if (points.size() != weights.size()) {
    throw Error(ErrorKind::InvalidArgument, "grid has " + std::to_string(points.size()) +
                                                " points but " + std::to_string(weights.size()) +
                                                " weights");
  }
  const double h = spacing();
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "grid must be strictly increasing");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double expected = points.front() + h * static_cast<double>(i);
    if (std::abs(points[i] - expected) > kUniformTol * std::max(1.0, std::abs(expected))) {
      throw Error(ErrorKind::InvalidArgument,
                  "grid must be uniform (point " + std::to_string(i) + " is off)");
    }
    if (!std::isfinite(weights[i])) {
      throw Error(ErrorKind::NonFinite, "density weight " + std::to_string(i) + " is not finite");
    }
    if (weights[i] < 0.0) {
      throw Error(ErrorKind::InvalidArgument,
                  "density weight " + std::to_string(i) + " is negative");
    }
  }
}

GridDensity GridDensity::normalized() const {
  validate();
  const double mass = total_mass();
  if (!(mass > 0.0)) throw Error(ErrorKind::EmptySupport, "density is identically zero");
  GridDensity out = *this;
  for (double& w : out.weights) w /= mass;
  return out;
}

GridDensity GridDensity::sample(double lo, double hi, int n,
                                const std::function<double(double)>& f) {
  if (n < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "bad sampling interval");
  GridDensity out;
  const double h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    out.points.push_back(x);
    out.weights.push_back(f(x));
  }
  return out;
}

GridDensity GridDensity::uniform_grid(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "bad grid interval");
  GridDensity out;
  for (int i = 0; i < n; ++i) out.points.push_back(lo + (hi - lo) * i / (n - 1));
  out.weights.assign(static_cast<std::size_t>(n), 0.0);
  return out;
}

double w1_same_grid(const GridDensity& a, const GridDensity& b) {
  require_same_grid(a, b);
  const auto fa = a.edge_cdf();
  const auto fb = b.edge_cdf();
  double sum = 0.0;
  for (std::size_t k = 1; k + 1 < fa.size(); ++k) sum += std::abs(fa[k] - fb[k]);
  return sum * a.spacing();
}

double cdf_sup_distance(const GridDensity& a, const GridDensity& b) {
  require_same_grid(a, b);
  const auto fa = a.edge_cdf();
  const auto fb = b.edge_cdf();
  double worst = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) worst = std::max(worst, std::abs(fa[k] - fb[k]));
  return worst;
}

}  // namespace bridgeflow
