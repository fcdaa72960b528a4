#pragma once

// Data-parallel inner loops of the quantizer.
//
// Every kernel exists as a scalar reference and, where the CPU allows, an AVX2
// variant. Reductions use a fixed 4-lane striped order (element i accumulates
// into lane i % 4, lanes combined as (l0 + l1) + (l2 + l3)) so that the SIMD
// variants reproduce the scalar results bit for bit. The active table is picked
// once at startup from CPUID; NUQ_KERNELS=scalar|avx2 overrides it.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace nuq::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  double (*sum_squares)(const double* x, std::size_t n);
  double (*max_abs)(const double* x, std::size_t n);

  // out[i] = bin(r_i) + [u_i < p(r_i)], r_i = min(|v_i| / norm, 1).
  // `levels` holds s + 2 values; norm > 0.
  void (*stochastic_round)(const double* v, std::size_t n, double norm,
                           const double* levels, std::size_t s, const double* u,
                           std::int32_t* out);

  // Sum over i of (l_{bin+1} - r_i)(r_i - l_bin).
  double (*variance_sum)(const double* v, std::size_t n, double norm,
                         const double* levels, std::size_t s);

  // Sum over i of P(coordinate i quantizes to a nonzero level).
  double (*nonzero_prob_sum)(const double* v, std::size_t n, double norm,
                             const double* levels, std::size_t s);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when the build has no AVX2 kernels.
const KernelTable* avx2_table() noexcept;

bool cpu_supports(Isa isa) noexcept;

/// Table used by the quantizer.
const KernelTable& active() noexcept;

/// Force a table (tests, benchmarking). Throws PreconditionError if the CPU or
/// build does not support it.
void select(Isa isa);

inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}

inline double max_abs(std::span<const double> x) {
  return active().max_abs(x.data(), x.size());
}

}  // namespace nuq::kernels
