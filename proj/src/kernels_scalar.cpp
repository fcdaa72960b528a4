#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace nuq::kernels::scalar {

namespace {

inline double combine(const double (&lane)[4]) noexcept {
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

inline std::size_t bin_of(double r, const double* levels, std::size_t s) noexcept {
  std::size_t bin = 0;
  for (std::size_t j = 1; j <= s; ++j) bin += levels[j] <= r ? 1 : 0;
  return bin;
}

inline double normalized(double v, double norm) noexcept {
  const double r = std::fabs(v) / norm;
  return r < 1.0 ? r : 1.0;
}

}  // namespace

double sum_squares(const double* x, std::size_t n) noexcept {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double sq = x[i] * x[i];
    lane[i & 3] += sq;
  }
  return combine(lane);
}

double max_abs(const double* x, std::size_t n) noexcept {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

void stochastic_round(const double* v, std::size_t n, double norm, const double* levels,
                      std::size_t s, const double* u, std::int32_t* out) noexcept {
  for (std::size_t i = 0; i < n; ++i) {
    const double r = normalized(v[i], norm);
    const std::size_t bin = bin_of(r, levels, s);
    const double lo = levels[bin];
    const double hi = levels[bin + 1];
    const double p = (r - lo) / (hi - lo);
    out[i] = static_cast<std::int32_t>(bin) + (u[i] < p ? 1 : 0);
  }
}

double variance_sum(const double* v, std::size_t n, double norm, const double* levels,
                    std::size_t s) noexcept {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double r = normalized(v[i], norm);
    const std::size_t bin = bin_of(r, levels, s);
    const double term = (levels[bin + 1] - r) * (r - levels[bin]);
    lane[i & 3] += term;
  }
  return combine(lane);
}

double nonzero_prob_sum(const double* v, std::size_t n, double norm, const double* levels,
                        std::size_t s) noexcept {
  (void)s;
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const double l1 = levels[1];
  for (std::size_t i = 0; i < n; ++i) {
    const double r = normalized(v[i], norm);
    const double term = l1 <= r ? 1.0 : r / l1;
    lane[i & 3] += term;
  }
  return combine(lane);
}

}  // namespace nuq::kernels::scalar
