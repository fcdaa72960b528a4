#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nuq/quantizer.hpp"

namespace nuq::lab {

struct VarianceEstimate {
  double mean = 0.0;
  double stderr = 0.0;  // sample standard deviation / sqrt(samples)
  std::size_t samples = 0;
};

/// Running mean and centered second moment; merges are order-dependent in
/// floating point, so callers merge fixed blocks in a fixed order.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept;
  void merge(const Moments& other) noexcept;
  VarianceEstimate estimate() const noexcept;
  double sample_variance() const noexcept;
};

inline constexpr std::size_t kMinSamples = 100;

/// Draw k uses RandomSource(seed, k). Draws are processed in blocks of fixed
/// size and merged in block order, so `threads` never changes the result.
std::vector<VarianceEstimate> mc_mean(std::span<const double> v, const Scheme& scheme,
                                      std::size_t n, std::uint64_t seed, int threads = 1);

/// Estimate of E||Q(v) - v||^2.
VarianceEstimate mc_variance(std::span<const double> v, const Scheme& scheme, std::size_t n,
                             std::uint64_t seed, int threads = 1);

/// mean_i Var[g_i] / mean_i E[g_i^2] where g is one of `samples` (repeated
/// gradient evaluations at one point) passed through the scheme with n
/// quantization draws each. The denominator uses the raw samples.
double normalized_variance(const std::vector<std::vector<double>>& samples,
                           const Scheme& scheme, std::size_t n, std::uint64_t seed,
                           int threads = 1);

// --- separation between the L2 nonuniform scheme and max-norm uniform levels --

struct SeparationInputs {
  std::size_t d = 0;
  double K1 = 0.0;
  double K2 = 0.0;
  int s = 0;
};

struct SeparationCheck {
  double cond1_lhs = 0.0, cond1_rhs = 0.0;  // K1/((d-1)sqrt(1+K2^2/(d-1))) < 2^{-s}
  double cond2_lhs = 0.0, cond2_rhs = 0.0;  // (1+K1^2/(d-1)) K1 (K1/(4(d-1)) + 2^{-s}) < K2 (1/s - K1/(d-1))
  bool range_ok = false;                    // 0 < K2 < K1 <= sqrt(d), d >= 2, s >= 1
  bool cond1 = false, cond2 = false;
  bool ok() const noexcept { return range_ok && cond1 && cond2; }
  /// Empty when ok(); otherwise names the first violated inequality.
  std::string violation() const;
};

SeparationCheck check_separation(const SeparationInputs& in);

struct SeparationResult {
  std::vector<double> v;     // v_0 = 1, v_j = K1/(d-1)
  double var_nuq = 0.0;      // (0, 2^-s, ..., 1/2, 1), L2
  double var_qinf = 0.0;     // max norm, level gap 1/s
  double var_qinf_alt = 0.0; // max norm, level gap 1/(s+1)
  bool separated() const noexcept { return var_nuq < var_qinf; }
  bool separated_alt() const noexcept { return var_nuq < var_qinf_alt; }
};

/// Throws PreconditionError naming the violated inequality unless check_separation passes.
SeparationResult separation_vector(const SeparationInputs& in);

/// First admissible inputs in a fixed scan over s in [1, s_max], d = 2^4 .. 2^d_log_max,
/// K1 on a grid up to sqrt(d) and K2 < K1. Throws NumericalError if none is found.
SeparationInputs find_separation(int s_max = 8, int d_log_max = 16);

/// Exact variance of max-norm quantization onto the uniform grid with spacing `gap`
/// (1/gap must be an integer). Covers gap = 1, which has no internal level.
double uniform_grid_variance_linf(std::span<const double> v, double gap);

// --- export -----------------------------------------------------------------

struct VarianceRow {
  std::size_t vector_id = 0;
  std::string scheme;
  int s = 0;
  double closed_form = 0.0;
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
};

/// Header vector_id,scheme,s,closed_form,mc_mean,mc_stderr.
void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows);

}  // namespace nuq::lab
