#pragma once

#include <cstddef>
#include <cstdint>

namespace nuq::kernels {

#define NUQ_KERNEL_DECLS                                                               \
  double sum_squares(const double* x, std::size_t n) noexcept;                         \
  double max_abs(const double* x, std::size_t n) noexcept;                             \
  void stochastic_round(const double* v, std::size_t n, double norm,                   \
                        const double* levels, std::size_t s, const double* u,          \
                        std::int32_t* out) noexcept;                                   \
  double variance_sum(const double* v, std::size_t n, double norm, const double* levels, \
                      std::size_t s) noexcept;                                         \
  double nonzero_prob_sum(const double* v, std::size_t n, double norm,                 \
                          const double* levels, std::size_t s) noexcept;

namespace scalar {
NUQ_KERNEL_DECLS
}

#if defined(NUQ_HAVE_AVX2)
namespace avx2 {
NUQ_KERNEL_DECLS
}
#endif

#undef NUQ_KERNEL_DECLS

}  // namespace nuq::kernels
