#pragma once

#include <optional>
#include <string_view>

#include "bridgeflow/grid_density.hpp"

namespace bridgeflow {

/// Piecewise-cosine density on [0, 1] with a low plateau on [0, 2/3) and a
/// tall bump on [2/3, 1]; normalized to unit mass.
double piecewise_cosine_rho0(double x);

/// Mirror image piecewise_cosine_rho0(1 - x).
double piecewise_cosine_rho1(double x);

/// Named built-in densities sampled at n cell centres on their support, or
/// nullopt for an unknown name. Known names: "piecewise_cosine_rho0",
/// "piecewise_cosine_rho1".
std::optional<GridDensity> builtin_density(std::string_view name, int n);

}  // namespace bridgeflow
