#include <atomic>

#include "bridgeflow/simd.hpp"

namespace bridgeflow::simd {

namespace {

bool cpu_has_avx2() {
#if defined(BRIDGEFLOW_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Backend>& selected() {
  static std::atomic<Backend> backend{detected_backend()};
  return backend;
}

}  // namespace

std::string_view to_string(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

Backend detected_backend() {
  static const Backend best = cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
  return best;
}

Backend active_backend() { return selected().load(std::memory_order_relaxed); }

Backend set_backend(Backend backend) {
  if (backend == Backend::Avx2 && detected_backend() != Backend::Avx2) backend = Backend::Scalar;
  selected().store(backend, std::memory_order_relaxed);
  return backend;
}

double lse_shifted(const double* a, const double* b, std::size_t n) {
#if defined(BRIDGEFLOW_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) return avx2::lse_shifted(a, b, n);
#endif
  return scalar::lse_shifted(a, b, n);
}

void exp_shifted(const double* a, double shift, double* out, std::size_t n) {
#if defined(BRIDGEFLOW_HAVE_AVX2)
  if (active_backend() == Backend::Avx2) return avx2::exp_shifted(a, shift, out, n);
#endif
  scalar::exp_shifted(a, shift, out, n);
}

}  // namespace bridgeflow::simd
