#include "nuq/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"
#include "nuq/error.hpp"

namespace nuq::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar,           "scalar",
                              scalar::sum_squares,   scalar::max_abs,
                              scalar::stochastic_round, scalar::variance_sum,
                              scalar::nonzero_prob_sum};

#if defined(NUQ_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2,             "avx2",
                            avx2::sum_squares,     avx2::max_abs,
                            avx2::stochastic_round, avx2::variance_sum,
                            avx2::nonzero_prob_sum};
#endif

const KernelTable* initial_table() noexcept {
  const char* env = std::getenv("NUQ_KERNELS");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return &kScalar;
  if (avx2_table() && cpu_supports(Isa::avx2)) return avx2_table();
  return &kScalar;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(NUQ_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(NUQ_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&kScalar, std::memory_order_release);
    return;
  }
  if (!avx2_table() || !cpu_supports(isa)) {
    throw PreconditionError("AVX2 kernels unavailable on this build or CPU");
  }
  current().store(avx2_table(), std::memory_order_release);
}

}  // namespace nuq::kernels
