#include "bridgeflow/builtin_densities.hpp"

#include <cmath>
#include <numbers>

namespace bridgeflow {

namespace {

// The unnormalized profile integrates to 2 over [0, 1].
constexpr double kMass = 2.0;

}  // namespace

double piecewise_cosine_rho0(double x) {
  using std::numbers::pi;
  if (x < 0.0 || x > 1.0) return 0.0;
  if (x < 2.0 / 3.0) return (0.2 - 0.2 * std::cos(3.0 * pi * x) + 0.2) / kMass;
  return (5.0 - 5.0 * std::cos(6.0 * pi * x - 4.0 * pi) + 0.2) / kMass;
}

double piecewise_cosine_rho1(double x) { return piecewise_cosine_rho0(1.0 - x); }

std::optional<GridDensity> builtin_density(std::string_view name, int n) {
  if (name == "piecewise_cosine_rho0") {
    return GridDensity::sample(0.0, 1.0, n, piecewise_cosine_rho0).normalized();
  }
  if (name == "piecewise_cosine_rho1") {
    return GridDensity::sample(0.0, 1.0, n, piecewise_cosine_rho1).normalized();
  }
  return std::nullopt;
}

}  // namespace bridgeflow
