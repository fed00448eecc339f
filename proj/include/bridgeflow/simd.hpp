#pragma once

#include <cstddef>
#include <string_view>

// Vector kernels behind the log-domain Sinkhorn loops. Each kernel has a
// scalar reference and, on x86-64, an AVX2+FMA variant; the public entry
// points dispatch on the CPU at first use.

namespace bridgeflow::simd {

enum class Backend { Scalar, Avx2 };

std::string_view to_string(Backend backend);

/// Best backend supported by this build and this CPU.
Backend detected_backend();

/// Backend used by the dispatching entry points.
Backend active_backend();

/// Forces a backend; requests for an unavailable backend fall back to scalar.
/// Returns the backend actually selected.
Backend set_backend(Backend backend);

/// log(sum_j exp(a[j] + b[j])); returns -inf for n == 0.
double lse_shifted(const double* a, const double* b, std::size_t n);

/// out[j] = exp(a[j] + shift).
void exp_shifted(const double* a, double shift, double* out, std::size_t n);

namespace scalar {
double lse_shifted(const double* a, const double* b, std::size_t n);
void exp_shifted(const double* a, double shift, double* out, std::size_t n);
}  // namespace scalar

#if defined(BRIDGEFLOW_HAVE_AVX2)
namespace avx2 {
double lse_shifted(const double* a, const double* b, std::size_t n);
void exp_shifted(const double* a, double shift, double* out, std::size_t n);
}  // namespace avx2
#endif

}  // namespace bridgeflow::simd
