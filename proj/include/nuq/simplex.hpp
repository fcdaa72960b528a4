#pragma once

#include <cstddef>
#include <vector>

namespace nuq {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  std::vector<double> x;
};

/// maximize c.x  subject to  A x <= b,  x >= 0.
///
/// Dense two-phase tableau simplex with Bland's rule. Meant for the handful of
/// variables in the worst-case variance programs; b may have either sign.
/// `A` is row-major, one row per constraint.
LpResult simplex_maximize(const std::vector<std::vector<double>>& A,
                          const std::vector<double>& b, const std::vector<double>& c,
                          double tolerance = 1e-10);

}  // namespace nuq
