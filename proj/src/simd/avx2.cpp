// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "bridgeflow/simd.hpp"

namespace bridgeflow::simd::avx2 {

namespace {

constexpr double kExpLo = -708.3;
constexpr double kExpHi = 709.7;

// exp(x) = 2^k exp(r), k = round(x / ln 2), |r| <= ln2 / 2, with exp(r) from
// its degree-12 Taylor polynomial (truncation below 2e-16 relative).
inline __m256d exp4(__m256d x) {
  const __m256d underflow = _mm256_cmp_pd(x, _mm256_set1_pd(kExpLo), _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kExpLo)), _mm256_set1_pd(kExpHi));
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(0.693145751953125), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.42860682030941723212e-6), r);

  static constexpr double kCoeff[] = {
      1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0, 1.0 / 40320.0,
      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,     1.0 / 6.0,
      0.5,               1.0,              1.0};
  __m256d p = _mm256_set1_pd(kCoeff[0]);
  for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kCoeff[i]));

  const __m128i k32 = _mm256_cvtpd_epi32(k);
  __m256i bits = _mm256_add_epi64(_mm256_cvtepi32_epi64(k32), _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

}  // namespace

double lse_shifted(const double* a, const double* b, std::size_t n) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::size_t j = 0;
  __m256d vmax = _mm256_set1_pd(neg_inf);
  for (; j + 4 <= n; j += 4) {
    vmax = _mm256_max_pd(vmax, _mm256_add_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)));
  }
  double peak = hmax(vmax);
  for (; j < n; ++j) peak = std::max(peak, a[j] + b[j]);
  if (!std::isfinite(peak)) return peak;

  const __m256d vpeak = _mm256_set1_pd(peak);
  __m256d acc = _mm256_setzero_pd();
  j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d s = _mm256_add_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j));
    acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(s, vpeak)));
  }
  double sum = hsum(acc);
  for (; j < n; ++j) sum += std::exp(a[j] + b[j] - peak);
  return peak + std::log(sum);
}

void exp_shifted(const double* a, double shift, double* out, std::size_t n) {
  const __m256d vshift = _mm256_set1_pd(shift);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(out + j, exp4(_mm256_add_pd(_mm256_loadu_pd(a + j), vshift)));
  }
  for (; j < n; ++j) out[j] = std::exp(a[j] + shift);
}

}  // namespace bridgeflow::simd::avx2
