#include "nuq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nuq/error.hpp"
#include "nuq/kernels.hpp"

namespace nuq {

namespace {

void require_finite(std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw PreconditionError("non-finite input at coordinate " + std::to_string(i));
    }
  }
}

}  // namespace

std::size_t BucketSpec::bucket_count(std::size_t dimension) const {
  if (size < 1) throw PreconditionError("bucket size must be >= 1");
  return (dimension + size - 1) / size;
}

double vector_norm(std::span<const double> v, Normalization norm) {
  const double n = norm == Normalization::l2 ? std::sqrt(kernels::sum_squares(v))
                                             : kernels::max_abs(v);
  if (!std::isfinite(n)) throw NumericalError("vector norm overflowed");
  return n;
}

QuantizedVector quantize(std::span<const double> v, const LevelSequence& levels,
                         const RandomSource& rng, Normalization norm,
                         std::uint64_t first_index) {
  require_finite(v);
  QuantizedVector q;
  q.dimension = v.size();
  q.norm = vector_norm(v, norm);
  if (q.norm == 0.0) return q;

  std::vector<double> uniforms(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) uniforms[i] = rng.uniform(first_index + i);
  std::vector<std::int32_t> level(v.size());
  kernels::active().stochastic_round(v.data(), v.size(), q.norm, levels.values().data(),
                                     levels.s(), uniforms.data(), level.data());

  for (std::size_t i = 0; i < v.size(); ++i) {
    if (level[i] == 0) continue;
    q.entries.push_back({i, static_cast<std::int8_t>(v[i] < 0.0 ? -1 : 1),
                         static_cast<std::uint32_t>(level[i])});
  }
  return q;
}

QuantizedVector quantize_linf(std::span<const double> v, const LevelSequence& levels,
                              const RandomSource& rng) {
  return quantize(v, levels, rng, Normalization::linf);
}

std::vector<QuantizedVector> quantize_bucketed(std::span<const double> v,
                                               BucketSpec bucket, Normalization norm,
                                               const LevelSequence& levels,
                                               const RandomSource& rng) {
  const std::size_t count = bucket.bucket_count(v.size());
  std::vector<QuantizedVector> out;
  out.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t begin = b * bucket.size;
    const std::size_t len = std::min(bucket.size, v.size() - begin);
    out.push_back(quantize(v.subspan(begin, len), levels, rng, norm, begin));
  }
  return out;
}

void validate(const QuantizedVector& q, const LevelSequence& levels) {
  if (!(q.norm >= 0.0) || !std::isfinite(q.norm)) {
    throw PreconditionError("quantized norm must be finite and nonnegative");
  }
  if (q.norm == 0.0 && !q.entries.empty()) {
    throw PreconditionError("zero-norm quantized vector carries entries");
  }
  const std::size_t top = levels.s() + 1;
  for (std::size_t k = 0; k < q.entries.size(); ++k) {
    const auto& e = q.entries[k];
    if (e.index >= q.dimension) throw PreconditionError("entry index past dimension");
    if (k > 0 && e.index <= q.entries[k - 1].index) {
      throw PreconditionError("entry indices not strictly increasing");
    }
    if (e.level < 1 || e.level > top) {
      throw PreconditionError("level index " + std::to_string(e.level) +
                              " outside 1.." + std::to_string(top));
    }
    if (e.sign != 1 && e.sign != -1) throw PreconditionError("sign must be +1 or -1");
  }
}

void dequantize_into(const QuantizedVector& q, const LevelSequence& levels,
                     std::span<double> out) {
  validate(q, levels);
  if (out.size() != q.dimension) throw PreconditionError("output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& e : q.entries) {
    const double magnitude = q.norm * levels[e.level];
    out[e.index] = e.sign < 0 ? -magnitude : magnitude;
  }
}

std::vector<double> dequantize(const QuantizedVector& q, const LevelSequence& levels) {
  std::vector<double> out(q.dimension);
  dequantize_into(q, levels, out);
  return out;
}

std::vector<double> dequantize_buckets(std::span<const QuantizedVector> buckets,
                                       const LevelSequence& levels) {
  std::size_t total = 0;
  for (const auto& b : buckets) total += b.dimension;
  std::vector<double> out(total);
  std::size_t offset = 0;
  for (const auto& b : buckets) {
    dequantize_into(b, levels, std::span<double>(out).subspan(offset, b.dimension));
    offset += b.dimension;
  }
  return out;
}

double closed_form_variance(std::span<const double> v, const LevelSequence& levels,
                            Normalization norm) {
  require_finite(v);
  const double n = vector_norm(v, norm);
  if (n == 0.0) return 0.0;
  const double sum = kernels::active().variance_sum(v.data(), v.size(), n,
                                                    levels.values().data(), levels.s());
  return n * n * sum;
}

double expected_nnz(std::span<const double> v, const LevelSequence& levels,
                    Normalization norm) {
  require_finite(v);
  const double n = vector_norm(v, norm);
  if (n == 0.0) return 0.0;
  return kernels::active().nonzero_prob_sum(v.data(), v.size(), n, levels.values().data(),
                                            levels.s());
}

void quantize_dense(std::span<const double> v, const LevelSequence& levels,
                    const RandomSource& rng, Normalization norm, std::span<double> out,
                    std::uint64_t first_index) {
  if (out.size() != v.size()) throw PreconditionError("output size mismatch");
  require_finite(v);
  const double n = vector_norm(v, norm);
  if (n == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  thread_local std::vector<double> uniforms;
  thread_local std::vector<std::int32_t> level;
  uniforms.resize(v.size());
  level.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) uniforms[i] = rng.uniform(first_index + i);
  kernels::active().stochastic_round(v.data(), v.size(), n, levels.values().data(), levels.s(),
                                     uniforms.data(), level.data());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (level[i] == 0) {
      out[i] = 0.0;
      continue;
    }
    const double magnitude = n * levels[static_cast<std::size_t>(level[i])];
    out[i] = v[i] < 0.0 ? -magnitude : magnitude;
  }
}

Scheme Scheme::make(SchemeKind kind, int s, double p) {
  if (kind == SchemeKind::nuq) return {kind, levels_exponential(p, s)};
  return {kind, levels_uniform(s)};
}

std::string_view scheme_name(SchemeKind kind) noexcept {
  switch (kind) {
    case SchemeKind::full_precision: return "full_precision";
    case SchemeKind::nuq: return "nuq";
    case SchemeKind::qsgd_l2: return "qsgd_l2";
    case SchemeKind::qsgd_inf: return "qsgd_inf";
  }
  return "?";
}

SchemeKind parse_scheme(std::string_view name) {
  for (auto k : {SchemeKind::full_precision, SchemeKind::nuq, SchemeKind::qsgd_l2,
                 SchemeKind::qsgd_inf}) {
    if (scheme_name(k) == name) return k;
  }
  throw PreconditionError("unknown scheme '" + std::string(name) + "'");
}

void apply_scheme_dense(const Scheme& scheme, std::span<const double> v,
                        const RandomSource& rng, std::span<double> out,
                        std::uint64_t first_index) {
  if (!scheme.quantizes()) {
    if (out.size() != v.size()) throw PreconditionError("output size mismatch");
    std::copy(v.begin(), v.end(), out.begin());
    return;
  }
  quantize_dense(v, scheme.levels, rng, scheme.normalization(), out, first_index);
}

}  // namespace nuq
