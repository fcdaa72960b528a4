#include "nuq/simplex.hpp"

#include <cmath>
#include <limits>

#include "nuq/error.hpp"

namespace nuq {

namespace {

// Tableau rows 0..m-1 are constraints, row m is the objective written as
// z - c.x = 0 (so a negative entry marks an improving column). Column `cols`
// holds the right-hand side.
struct Tableau {
  std::size_t m, cols;
  std::vector<double> t;
  std::vector<std::size_t> basis;

  double& at(std::size_t r, std::size_t c) { return t[r * (cols + 1) + c]; }
  double rhs(std::size_t r) const { return t[r * (cols + 1) + cols]; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    for (std::size_t c = 0; c <= cols; ++c) at(pr, c) *= inv;
    at(pr, pc) = 1.0;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis[pr] = pc;
  }

  // Bland: lowest-index improving column, ratio ties to lowest basic index.
  // Columns >= `allowed` never enter.
  bool optimize(std::size_t allowed, double tol) {
    for (;;) {
      std::size_t enter = allowed;
      for (std::size_t c = 0; c < allowed; ++c) {
        if (at(m, c) < -tol) {
          enter = c;
          break;
        }
      }
      if (enter == allowed) return true;
      std::size_t leave = m;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m; ++r) {
        const double a = at(r, enter);
        if (a <= tol) continue;
        const double ratio = rhs(r) / a;
        if (ratio < best - tol || (std::abs(ratio - best) <= tol && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave == m) return false;
      pivot(leave, enter);
    }
  }
};

}  // namespace

LpResult simplex_maximize(const std::vector<std::vector<double>>& A,
                          const std::vector<double>& b, const std::vector<double>& c,
                          double tolerance) {
  const std::size_t m = b.size();
  const std::size_t n = c.size();
  if (A.size() != m) throw PreconditionError("simplex: A and b row counts differ");
  for (const auto& row : A) {
    if (row.size() != n) throw PreconditionError("simplex: ragged constraint matrix");
  }

  // Columns: n structural, m slacks, one artificial per negative-rhs row.
  std::vector<std::size_t> negative;
  for (std::size_t r = 0; r < m; ++r) {
    if (b[r] < 0.0) negative.push_back(r);
  }
  const std::size_t art0 = n + m;
  const std::size_t cols = art0 + negative.size();

  Tableau tab{m, cols, std::vector<double>((m + 1) * (cols + 1), 0.0),
              std::vector<std::size_t>(m, 0)};
  std::size_t next_art = art0;
  for (std::size_t r = 0; r < m; ++r) {
    const double sign = b[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) tab.at(r, j) = sign * A[r][j];
    tab.at(r, n + r) = sign;
    tab.at(r, cols) = sign * b[r];
    if (b[r] < 0.0) {
      tab.at(r, next_art) = 1.0;
      tab.basis[r] = next_art++;
    } else {
      tab.basis[r] = n + r;
    }
  }

  LpResult result;
  if (!negative.empty()) {
    // Phase 1: maximize -sum(artificials), priced out against the basis.
    for (std::size_t r : negative) {
      for (std::size_t col = 0; col <= cols; ++col) tab.at(m, col) -= tab.at(r, col);
    }
    for (std::size_t k = art0; k < cols; ++k) tab.at(m, k) = 0.0;
    tab.optimize(cols, tolerance);
    if (tab.rhs(m) < -tolerance * (1.0 + std::abs(tab.rhs(m)))) {
      result.status = LpStatus::infeasible;
      return result;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (std::size_t r = 0; r < m; ++r) {
      if (tab.basis[r] < art0) continue;
      for (std::size_t col = 0; col < art0; ++col) {
        if (std::abs(tab.at(r, col)) > tolerance) {
          tab.pivot(r, col);
          break;
        }
      }
    }
    for (std::size_t col = 0; col <= cols; ++col) tab.at(m, col) = 0.0;
  }

  // Phase 2 objective row, priced out against the current basis.
  for (std::size_t j = 0; j < n; ++j) tab.at(m, j) = -c[j];
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t bc = tab.basis[r];
    const double f = bc < n ? tab.at(m, bc) : 0.0;
    if (f == 0.0) continue;
    for (std::size_t col = 0; col <= cols; ++col) tab.at(m, col) -= f * tab.at(r, col);
  }

  if (!tab.optimize(art0, tolerance)) {
    result.status = LpStatus::unbounded;
    return result;
  }
  result.status = LpStatus::optimal;
  result.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (tab.basis[r] < n) result.x[tab.basis[r]] = tab.rhs(r);
  }
  result.value = 0.0;
  for (std::size_t j = 0; j < n; ++j) result.value += c[j] * result.x[j];
  return result;
}

}  // namespace nuq
