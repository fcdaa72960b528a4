// Compiled with -mavx2 (and nothing else); only reached after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace nuq::kernels::avx2 {

namespace {

inline __m256d abs_pd(__m256d x) noexcept {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x);
}

// Same lane order as the scalar reference: tail element i goes to lane i % 4.
inline double finish(__m256d acc, const double* tail, std::size_t begin,
                     std::size_t n) noexcept {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t i = begin; i < n; ++i) lane[i & 3] += tail[i - begin];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

inline __m256d normalized(const double* v, __m256d norm) noexcept {
  const __m256d r = _mm256_div_pd(abs_pd(_mm256_loadu_pd(v)), norm);
  // min_pd(r, 1) returns r iff r < 1, matching the scalar ternary.
  return _mm256_min_pd(r, _mm256_set1_pd(1.0));
}

inline __m256d bin_of(__m256d r, const double* levels, std::size_t s) noexcept {
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d bin = _mm256_setzero_pd();
  for (std::size_t j = 1; j <= s; ++j) {
    const __m256d le = _mm256_cmp_pd(_mm256_set1_pd(levels[j]), r, _CMP_LE_OQ);
    bin = _mm256_add_pd(bin, _mm256_and_pd(le, one));
  }
  return bin;
}

inline double scalar_r(double v, double norm) noexcept {
  const double r = std::fabs(v) / norm;
  return r < 1.0 ? r : 1.0;
}

inline std::size_t scalar_bin(double r, const double* levels, std::size_t s) noexcept {
  std::size_t bin = 0;
  for (std::size_t j = 1; j <= s; ++j) bin += levels[j] <= r ? 1 : 0;
  return bin;
}

}  // namespace

double sum_squares(const double* x, std::size_t n) noexcept {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double tail[4];
  for (std::size_t k = i; k < n; ++k) tail[k - i] = x[k] * x[k];
  return finish(acc, tail, i, n);
}

double max_abs(const double* x, std::size_t n) noexcept {
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, abs_pd(_mm256_loadu_pd(x + i)));
  alignas(32) double lane[4];
  _mm256_store_pd(lane, m);
  double out = std::max(std::max(lane[0], lane[1]), std::max(lane[2], lane[3]));
  for (; i < n; ++i) out = std::max(out, std::fabs(x[i]));
  return out;
}

void stochastic_round(const double* v, std::size_t n, double norm, const double* levels,
                      std::size_t s, const double* u, std::int32_t* out) noexcept {
  const __m256d vnorm = _mm256_set1_pd(norm);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = normalized(v + i, vnorm);
    const __m256d bin = bin_of(r, levels, s);
    const __m128i idx = _mm256_cvtpd_epi32(bin);
    const __m256d lo = _mm256_i32gather_pd(levels, idx, 8);
    const __m256d hi = _mm256_i32gather_pd(levels + 1, idx, 8);
    const __m256d p = _mm256_div_pd(_mm256_sub_pd(r, lo), _mm256_sub_pd(hi, lo));
    const __m256d up = _mm256_cmp_pd(_mm256_loadu_pd(u + i), p, _CMP_LT_OQ);
    const __m256d level = _mm256_add_pd(bin, _mm256_and_pd(up, one));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), _mm256_cvtpd_epi32(level));
  }
  for (; i < n; ++i) {
    const double r = scalar_r(v[i], norm);
    const std::size_t bin = scalar_bin(r, levels, s);
    const double lo = levels[bin];
    const double hi = levels[bin + 1];
    const double p = (r - lo) / (hi - lo);
    out[i] = static_cast<std::int32_t>(bin) + (u[i] < p ? 1 : 0);
  }
}

double variance_sum(const double* v, std::size_t n, double norm, const double* levels,
                    std::size_t s) noexcept {
  const __m256d vnorm = _mm256_set1_pd(norm);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = normalized(v + i, vnorm);
    const __m128i idx = _mm256_cvtpd_epi32(bin_of(r, levels, s));
    const __m256d lo = _mm256_i32gather_pd(levels, idx, 8);
    const __m256d hi = _mm256_i32gather_pd(levels + 1, idx, 8);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_sub_pd(hi, r), _mm256_sub_pd(r, lo)));
  }
  double tail[4];
  for (std::size_t k = i; k < n; ++k) {
    const double r = scalar_r(v[k], norm);
    const std::size_t bin = scalar_bin(r, levels, s);
    tail[k - i] = (levels[bin + 1] - r) * (r - levels[bin]);
  }
  return finish(acc, tail, i, n);
}

double nonzero_prob_sum(const double* v, std::size_t n, double norm, const double* levels,
                        std::size_t s) noexcept {
  (void)s;
  const __m256d vnorm = _mm256_set1_pd(norm);
  const __m256d l1 = _mm256_set1_pd(levels[1]);
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = normalized(v + i, vnorm);
    const __m256d above = _mm256_cmp_pd(l1, r, _CMP_LE_OQ);
    const __m256d term = _mm256_blendv_pd(_mm256_div_pd(r, l1), one, above);
    acc = _mm256_add_pd(acc, term);
  }
  double tail[4];
  for (std::size_t k = i; k < n; ++k) {
    const double r = scalar_r(v[k], norm);
    tail[k - i] = levels[1] <= r ? 1.0 : r / levels[1];
  }
  return finish(acc, tail, i, n);
}

}  // namespace nuq::kernels::avx2
