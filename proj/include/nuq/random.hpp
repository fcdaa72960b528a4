#pragma once

#include <array>
#include <cstdint>

namespace nuq {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream keyed by (seed, stream id).
///
/// Draw `i` of a stream is a pure function of (seed, stream, i), so draws can
/// be evaluated in any order or partition and still reproduce bit for bit.
class RandomSource {
 public:
  constexpr RandomSource(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// 128 random bits for counter `index`.
  std::array<std::uint32_t, 4> block(std::uint64_t index) const noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const noexcept;

  /// Standard normal via Box-Muller on one block.
  double normal(std::uint64_t index) const noexcept;

  /// Uniform integer in [0, n); n > 0. Multiply-shift; bias below n / 2^64.
  std::uint64_t below(std::uint64_t index, std::uint64_t n) const noexcept;

  /// Child stream whose id is a hash of (this stream, tag). Used to carve
  /// independent streams for (iteration, worker, purpose) tuples.
  RandomSource substream(std::uint64_t tag) const noexcept;

  friend bool operator==(const RandomSource&, const RandomSource&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace nuq
