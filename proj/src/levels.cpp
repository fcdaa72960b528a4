#include "nuq/levels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nuq/error.hpp"

namespace nuq {

LevelSequence::LevelSequence(std::vector<double> levels,
                             std::optional<double> exponential_base)
    : levels_(std::move(levels)), base_(exponential_base) {
  if (levels_.size() < 3) {
    throw PreconditionError("level sequence needs at least one internal level");
  }
  if (levels_.front() != 0.0 || levels_.back() != 1.0) {
    throw PreconditionError("level sequence must start at 0 and end at 1");
  }
  for (std::size_t j = 0; j + 1 < levels_.size(); ++j) {
    if (!(levels_[j] < levels_[j + 1])) {
      throw PreconditionError("level sequence not strictly increasing at index " +
                              std::to_string(j));
    }
  }
}

bool LevelSequence::powers_of_half() const noexcept {
  for (std::size_t j = 1; j <= s(); ++j) {
    int exponent = 0;
    const double mantissa = std::frexp(levels_[j], &exponent);
    if (mantissa != 0.5) return false;
  }
  return true;
}

LevelSequence levels_exponential(double p, int s) {
  if (!(p > 0.0 && p < 1.0)) {
    throw PreconditionError("exponential base p must lie in (0, 1)");
  }
  if (s < 1) throw PreconditionError("need s >= 1 internal levels");
  std::vector<double> levels;
  levels.reserve(static_cast<std::size_t>(s) + 2);
  levels.push_back(0.0);
  for (int k = s; k >= 1; --k) levels.push_back(std::pow(p, k));
  levels.push_back(1.0);
  return LevelSequence(std::move(levels), p);
}

LevelSequence levels_uniform(int s) {
  if (s < 1) throw PreconditionError("need s >= 1 internal levels");
  std::vector<double> levels;
  levels.reserve(static_cast<std::size_t>(s) + 2);
  const double n = static_cast<double>(s) + 1.0;
  for (int k = 0; k <= s; ++k) levels.push_back(static_cast<double>(k) / n);
  levels.push_back(1.0);
  return LevelSequence(std::move(levels));
}

LevelLocation locate(double r, const LevelSequence& levels, double tolerance) {
  if (!std::isfinite(r) || r < -tolerance || r > 1.0 + tolerance) {
    throw PreconditionError("normalized magnitude outside [0, 1]: " +
                            std::to_string(r));
  }
  r = std::clamp(r, 0.0, 1.0);
  const auto v = levels.values();
  // Number of internal levels <= r; exact hits land in the upper bin.
  const auto internal = v.subspan(1, levels.s());
  const auto bin = static_cast<std::size_t>(
      std::upper_bound(internal.begin(), internal.end(), r) - internal.begin());
  LevelLocation loc;
  loc.bin = bin;
  loc.gap = v[bin + 1] - v[bin];
  loc.upper_prob = (r - v[bin]) / loc.gap;
  return loc;
}

}  // namespace nuq
