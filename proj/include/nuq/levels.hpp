#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace nuq {

/// Ordered quantization levels 0 = l_0 < l_1 < ... < l_s < l_{s+1} = 1.
///
/// `s` counts the internal levels only. Sequences built by
/// levels_exponential() remember their base so that callers (the codec's
/// power-of-two level code, the bounds module) can recognise them.
class LevelSequence {
 public:
  /// Throws PreconditionError unless `levels` starts at exactly 0, ends at
  /// exactly 1, is strictly increasing and has at least one internal level.
  explicit LevelSequence(std::vector<double> levels,
                         std::optional<double> exponential_base = std::nullopt);

  std::size_t s() const noexcept { return levels_.size() - 2; }
  std::size_t size() const noexcept { return levels_.size(); }
  double operator[](std::size_t j) const { return levels_[j]; }
  double gap(std::size_t j) const { return levels_[j + 1] - levels_[j]; }
  std::span<const double> values() const noexcept { return levels_; }
  std::optional<double> exponential_base() const noexcept { return base_; }

  /// True when every internal level is an exact power of 1/2.
  bool powers_of_half() const noexcept;

  friend bool operator==(const LevelSequence&, const LevelSequence&) = default;

 private:
  std::vector<double> levels_;
  std::optional<double> base_;
};

/// (0, p^s, p^{s-1}, ..., p, 1).
LevelSequence levels_exponential(double p, int s);

/// s internal levels equally spaced with gap 1/(s+1).
LevelSequence levels_uniform(int s);

/// Where a normalized magnitude r falls: r = (1 - upper_prob) l_bin + upper_prob l_{bin+1}.
struct LevelLocation {
  std::size_t bin = 0;
  double upper_prob = 0.0;
  double gap = 0.0;
};

inline constexpr double kClampTolerance = 1e-12;

/// Locate r in L. Exact internal levels resolve to the bin with upper_prob 0.
/// Values outside [0, 1] by at most `tolerance` are clamped; anything further
/// out throws PreconditionError.
LevelLocation locate(double r, const LevelSequence& levels,
                     double tolerance = kClampTolerance);

}  // namespace nuq
