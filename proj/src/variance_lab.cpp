#include "nuq/variance_lab.hpp"

#include <cmath>
#include <sstream>

#include "nuq/error.hpp"
#include "nuq/parallel.hpp"

namespace nuq::lab {

namespace {

constexpr std::size_t kBlock = 1024;

void check_samples(std::size_t n) {
  if (n < kMinSamples) {
    throw PreconditionError("need at least " + std::to_string(kMinSamples) + " draws, got " +
                            std::to_string(n));
  }
}

// Runs body(first, last, moments_for_block) over fixed blocks of draws and
// merges per-block results in block order.
template <class Body>
std::vector<Moments> blocked(std::size_t n, std::size_t width, int threads, Body&& body) {
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<std::vector<Moments>> partial(blocks, std::vector<Moments>(width));
  parallel_for(blocks, threads, [&](std::size_t b) {
    body(b * kBlock, std::min(n, (b + 1) * kBlock), partial[b]);
  });
  std::vector<Moments> total(width);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < width; ++i) total[i].merge(p[i]);
  }
  return total;
}

}  // namespace

void Moments::add(double x) noexcept {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

void Moments::merge(const Moments& o) noexcept {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
  const double delta = o.mean - mean;
  const double total = na + nb;
  mean += delta * nb / total;
  m2 += o.m2 + delta * delta * na * nb / total;
  n += o.n;
}

double Moments::sample_variance() const noexcept {
  return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
}

VarianceEstimate Moments::estimate() const noexcept {
  return {mean, n > 1 ? std::sqrt(sample_variance() / static_cast<double>(n)) : 0.0, n};
}

std::vector<VarianceEstimate> mc_mean(std::span<const double> v, const Scheme& scheme,
                                      std::size_t n, std::uint64_t seed, int threads) {
  check_samples(n);
  const std::size_t d = v.size();
  // Accumulate Q(v) - v, which is centred, then shift back.
  auto moments = blocked(n, d, threads, [&](std::size_t lo, std::size_t hi, std::vector<Moments>& m) {
    std::vector<double> q(d);
    for (std::size_t k = lo; k < hi; ++k) {
      apply_scheme_dense(scheme, v, RandomSource(seed, k), q);
      for (std::size_t i = 0; i < d; ++i) m[i].add(q[i] - v[i]);
    }
  });
  std::vector<VarianceEstimate> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = moments[i].estimate();
    out[i].mean += v[i];
  }
  return out;
}

VarianceEstimate mc_variance(std::span<const double> v, const Scheme& scheme, std::size_t n,
                             std::uint64_t seed, int threads) {
  check_samples(n);
  const std::size_t d = v.size();
  auto moments = blocked(n, 1, threads, [&](std::size_t lo, std::size_t hi, std::vector<Moments>& m) {
    std::vector<double> q(d);
    for (std::size_t k = lo; k < hi; ++k) {
      apply_scheme_dense(scheme, v, RandomSource(seed, k), q);
      double err = 0.0;
      for (std::size_t i = 0; i < d; ++i) err += (q[i] - v[i]) * (q[i] - v[i]);
      m[0].add(err);
    }
  });
  return moments[0].estimate();
}

double normalized_variance(const std::vector<std::vector<double>>& samples, const Scheme& scheme,
                           std::size_t n, std::uint64_t seed, int threads) {
  if (samples.size() < 2) throw PreconditionError("need at least 2 gradient samples");
  if (n < 1) throw PreconditionError("need at least one quantization draw per sample");
  const std::size_t d = samples[0].size();
  for (const auto& g : samples) {
    if (g.size() != d) throw PreconditionError("gradient samples differ in dimension");
  }
  double second = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (const auto& g : samples) acc += g[i] * g[i];
    second += acc / static_cast<double>(samples.size());
  }
  if (second == 0.0) throw PreconditionError("all gradient samples are zero");

  const std::size_t total = samples.size() * n;
  auto moments = blocked(total, d, threads, [&](std::size_t lo, std::size_t hi, std::vector<Moments>& m) {
    std::vector<double> q(d);
    for (std::size_t k = lo; k < hi; ++k) {
      apply_scheme_dense(scheme, samples[k / n], RandomSource(seed, k), q);
      for (std::size_t i = 0; i < d; ++i) m[i].add(q[i]);
    }
  });
  double var = 0.0;
  for (const auto& m : moments) {
    var += m.n > 0 ? m.m2 / static_cast<double>(m.n) : 0.0;
  }
  return var / second;
}

std::string SeparationCheck::violation() const {
  std::ostringstream os;
  os.precision(6);
  if (!range_ok) return "inputs must satisfy 0 < K2 < K1 <= sqrt(d), d >= 2, s >= 1";
  if (!cond1) {
    os << "K1/((d-1) sqrt(1 + K2^2/(d-1))) < 2^-s violated: " << cond1_lhs << " >= " << cond1_rhs;
    return os.str();
  }
  if (!cond2) {
    os << "(1 + K1^2/(d-1)) K1 (0.25 K1/(d-1) + 2^-s) < K2 (1/s - K1/(d-1)) violated: "
       << cond2_lhs << " >= " << cond2_rhs;
    return os.str();
  }
  return {};
}

SeparationCheck check_separation(const SeparationInputs& in) {
  SeparationCheck c;
  const double d1 = static_cast<double>(in.d) - 1.0;
  c.range_ok = in.d >= 2 && in.s >= 1 && in.K2 > 0.0 && in.K2 < in.K1 &&
               in.K1 <= std::sqrt(static_cast<double>(in.d));
  if (in.d < 2 || in.s < 1) return c;
  const double two_s = std::ldexp(1.0, -in.s);
  c.cond1_lhs = in.K1 / (d1 * std::sqrt(1.0 + in.K2 * in.K2 / d1));
  c.cond1_rhs = two_s;
  c.cond1 = c.cond1_lhs < c.cond1_rhs;
  c.cond2_lhs = (1.0 + in.K1 * in.K1 / d1) * in.K1 * (0.25 * in.K1 / d1 + two_s);
  c.cond2_rhs = in.K2 * (1.0 / in.s - in.K1 / d1);
  c.cond2 = c.cond2_lhs < c.cond2_rhs;
  return c;
}

double uniform_grid_variance_linf(std::span<const double> v, double gap) {
  const double steps = std::round(1.0 / gap);
  if (!(gap > 0.0 && gap <= 1.0) || std::abs(steps * gap - 1.0) > 1e-12) {
    throw PreconditionError("grid spacing must be 1/m for a positive integer m");
  }
  const double n = vector_norm(v, Normalization::linf);
  if (n == 0.0) return 0.0;
  double total = 0.0;
  for (double x : v) {
    const double r = std::min(std::abs(x) / n, 1.0);
    const double k = std::min(std::floor(r * steps), steps - 1.0);
    const double lo = k / steps, hi = (k + 1.0) / steps;
    total += (hi - r) * (r - lo);
  }
  return n * n * total;
}

SeparationResult separation_vector(const SeparationInputs& in) {
  const auto check = check_separation(in);
  if (!check.ok()) throw PreconditionError(check.violation());
  SeparationResult r;
  r.v.assign(in.d, in.K1 / (static_cast<double>(in.d) - 1.0));
  r.v[0] = 1.0;
  r.var_nuq = closed_form_variance(r.v, levels_exponential(0.5, in.s), Normalization::l2);
  r.var_qinf = uniform_grid_variance_linf(r.v, 1.0 / in.s);
  r.var_qinf_alt = uniform_grid_variance_linf(r.v, 1.0 / (in.s + 1));
  return r;
}

SeparationInputs find_separation(int s_max, int d_log_max) {
  for (int s = 1; s <= s_max; ++s) {
    for (int e = 4; e <= d_log_max; ++e) {
      const std::size_t d = std::size_t{1} << e;
      const double root = std::sqrt(static_cast<double>(d));
      for (int a = 1; a <= 16; ++a) {
        const double K1 = root * a / 16.0;
        for (int b = 1; b < 16; ++b) {
          const SeparationInputs in{d, K1, K1 * b / 16.0, s};
          if (check_separation(in).ok()) return in;
        }
      }
    }
  }
  throw NumericalError("no admissible separation inputs in the scanned range");
}

void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows) {
  const auto old = out.precision(17);
  out << "vector_id,scheme,s,closed_form,mc_mean,mc_stderr\n";
  for (const auto& r : rows) {
    out << r.vector_id << ',' << r.scheme << ',' << r.s << ',' << r.closed_form << ','
        << r.mc_mean << ',' << r.mc_stderr << '\n';
  }
  out.precision(old);
}

}  // namespace nuq::lab
