#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nuq/levels.hpp"
#include "nuq/random.hpp"

namespace nuq {

/// Which norm a vector is divided by before its magnitudes are rounded.
/// l2 with exponential levels is the nonuniform scheme; linf with uniform levels
/// is the max-norm heuristic (three levels of it give ternary quantization).
enum class Normalization { l2, linf };

struct QuantizedEntry {
  std::size_t index = 0;
  std::int8_t sign = 1;     // -1 or +1
  std::uint32_t level = 0;  // 1..s+1; level 0 is never stored

  friend bool operator==(const QuantizedEntry&, const QuantizedEntry&) = default;
};

/// Sparse quantized vector: dense value i is norm * sign * l_level.
struct QuantizedVector {
  double norm = 0.0;
  std::size_t dimension = 0;
  std::vector<QuantizedEntry> entries;  // strictly increasing index

  friend bool operator==(const QuantizedVector&, const QuantizedVector&) = default;
};

struct BucketSpec {
  std::size_t size = 0;

  std::size_t bucket_count(std::size_t dimension) const;
};

/// Stochastic rounding of v. Coordinate i draws its uniform from counter
/// `first_index + i` of `rng`, so a bucket quantized with its global offset
/// sees the same randomness regardless of how the vector is split.
QuantizedVector quantize(std::span<const double> v, const LevelSequence& levels,
                         const RandomSource& rng, Normalization norm = Normalization::l2,
                         std::uint64_t first_index = 0);

/// Max-norm variant; r_i = |v_i| / max|v| lies in [0, 1] by construction.
QuantizedVector quantize_linf(std::span<const double> v, const LevelSequence& levels,
                              const RandomSource& rng);

/// Consecutive buckets of `bucket.size` coordinates (last may be shorter),
/// each normalized by its own norm.
std::vector<QuantizedVector> quantize_bucketed(std::span<const double> v,
                                               BucketSpec bucket, Normalization norm,
                                               const LevelSequence& levels,
                                               const RandomSource& rng);

/// Throws PreconditionError if q is not a valid quantized vector against levels.
void validate(const QuantizedVector& q, const LevelSequence& levels);

std::vector<double> dequantize(const QuantizedVector& q, const LevelSequence& levels);

/// Writes q densely into out (out.size() == q.dimension).
void dequantize_into(const QuantizedVector& q, const LevelSequence& levels,
                     std::span<double> out);

std::vector<double> dequantize_buckets(std::span<const QuantizedVector> buckets,
                                       const LevelSequence& levels);

/// Exact E||Q(v) - v||^2 = norm^2 * sum_i (l_{bin+1} - r_i)(r_i - l_bin).
double closed_form_variance(std::span<const double> v, const LevelSequence& levels,
                            Normalization norm = Normalization::l2);

/// Exact E||Q(v)||_0.
double expected_nnz(std::span<const double> v, const LevelSequence& levels,
                    Normalization norm = Normalization::l2);

/// ||v||_2 or ||v||_inf through the active kernels.
double vector_norm(std::span<const double> v, Normalization norm);

/// dequantize(quantize(v, ...)) written straight into `out`, bit-identical to
/// the sparse path but without building entries. For Monte Carlo loops.
void quantize_dense(std::span<const double> v, const LevelSequence& levels,
                    const RandomSource& rng, Normalization norm, std::span<double> out,
                    std::uint64_t first_index = 0);

/// Named compressor configurations.
///   full_precision  no compression
///   nuq             exponential levels, L2 normalization
///   qsgd_l2         uniform levels, L2 normalization
///   qsgd_inf        uniform levels, max normalization
enum class SchemeKind { full_precision, nuq, qsgd_l2, qsgd_inf };

struct Scheme {
  SchemeKind kind = SchemeKind::full_precision;
  LevelSequence levels = levels_uniform(1);

  Normalization normalization() const noexcept {
    return kind == SchemeKind::qsgd_inf ? Normalization::linf : Normalization::l2;
  }
  bool quantizes() const noexcept { return kind != SchemeKind::full_precision; }

  /// Default levels for `kind`: (0, p^s, ..., p, 1) for nuq, uniform otherwise.
  static Scheme make(SchemeKind kind, int s, double p = 0.5);
};

std::string_view scheme_name(SchemeKind kind) noexcept;
/// Throws PreconditionError on an unknown name.
SchemeKind parse_scheme(std::string_view name);

/// Dense scheme application; full_precision copies v.
void apply_scheme_dense(const Scheme& scheme, std::span<const double> v,
                        const RandomSource& rng, std::span<double> out,
                        std::uint64_t first_index = 0);

}  // namespace nuq
