#include <cmath>
#include <limits>

#include "bridgeflow/simd.hpp"

namespace bridgeflow::simd::scalar {

double lse_shifted(const double* a, const double* b, std::size_t n) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) peak = std::max(peak, a[j] + b[j]);
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(a[j] + b[j] - peak);
  return peak + std::log(sum);
}

void exp_shifted(const double* a, double shift, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(a[j] + shift);
}

}  // namespace bridgeflow::simd::scalar
