#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "nuq/random.hpp"
#include "nuq/simplex.hpp"

using namespace nuq;

namespace {

using Mat = std::vector<std::vector<double>>;

// Best objective over basic feasible points: every choice of n tight
// constraints among the m rows and n sign constraints.
double vertex_max(const Mat& A, const std::vector<double>& b, const std::vector<double>& c,
                  bool& any_feasible) {
  const std::size_t m = A.size(), n = c.size(), total = m + n;
  double best = -INFINITY;
  any_feasible = false;
  std::vector<int> pick(total, 0);
  std::fill(pick.end() - static_cast<long>(n), pick.end(), 1);
  do {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    std::size_t r = 0;
    for (std::size_t k = 0; k < total; ++k) {
      if (!pick[k]) continue;
      if (k < m) {
        for (std::size_t j = 0; j < n; ++j) M(r, j) = A[k][j];
        rhs[r] = b[k];
      } else {
        M.row(r).setZero();
        M(r, k - m) = 1.0;
        rhs[r] = 0.0;
      }
      ++r;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() < static_cast<long>(n)) continue;
    const Eigen::VectorXd x = lu.solve(rhs);
    bool ok = (x.array() >= -1e-9).all();
    for (std::size_t i = 0; ok && i < m; ++i) {
      double lhs = 0;
      for (std::size_t j = 0; j < n; ++j) lhs += A[i][j] * x[j];
      ok = lhs <= b[i] + 1e-9;
    }
    if (!ok) continue;
    any_feasible = true;
    double v = 0;
    for (std::size_t j = 0; j < n; ++j) v += c[j] * x[j];
    best = std::max(best, v);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TEST_CASE("small textbook programs") {
  // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6).
  const auto r = simplex_maximize({{1, 0}, {0, 2}, {3, 2}}, {4, 12, 18}, {3, 5});
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.value == doctest::Approx(36));
  CHECK(r.x[0] == doctest::Approx(2));
  CHECK(r.x[1] == doctest::Approx(6));

  CHECK(simplex_maximize({{-1, 0}}, {1}, {1, 0}).status == LpStatus::unbounded);
  CHECK(simplex_maximize({{1, 1}}, {-1}, {1, 1}).status == LpStatus::infeasible);

  // Negative right-hand side needs phase one: x + y >= 2, x <= 3, y <= 3.
  const auto p1 = simplex_maximize({{-1, -1}, {1, 0}, {0, 1}}, {-2, 3, 3}, {-1, -2});
  REQUIRE(p1.status == LpStatus::optimal);
  CHECK(p1.value == doctest::Approx(-2));
}

TEST_CASE("Beale's cycling example terminates at the optimum") {
  const Mat A{{0.25, -8, -1, 9}, {0.5, -12, -0.5, 3}, {0, 0, 1, 0}};
  const std::vector<double> b{0, 0, 1}, c{0.75, -20, 0.5, -6};
  const auto r = simplex_maximize(A, b, c);
  REQUIRE(r.status == LpStatus::optimal);
  bool feasible = false;
  CHECK(r.value == doctest::Approx(vertex_max(A, b, c, feasible)).epsilon(1e-12));
  CHECK(feasible);
  CHECK(r.value == doctest::Approx(1.25));
}

TEST_CASE("random bounded programs agree with vertex enumeration") {
  const RandomSource rng(77);
  std::uint64_t k = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(k++, 3);
    const std::size_t m = 1 + rng.below(k++, 4);
    Mat A(m + 1, std::vector<double>(n));
    std::vector<double> b(m + 1), c(n);
    for (std::size_t i = 0; i < m; ++i) {
      for (auto& a : A[i]) a = std::round(8 * (rng.uniform(k++) - 0.4));
      b[i] = std::round(10 * (rng.uniform(k++) - 0.2));
    }
    A[m].assign(n, 1.0);  // keeps the feasible set bounded
    b[m] = 10;
    for (auto& x : c) x = std::round(10 * (rng.uniform(k++) - 0.3));
    bool feasible = false;
    const double ref = vertex_max(A, b, c, feasible);
    const auto r = simplex_maximize(A, b, c);
    if (!feasible) {
      CHECK(r.status == LpStatus::infeasible);
      continue;
    }
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.value == doctest::Approx(ref).epsilon(1e-9));
    for (std::size_t i = 0; i <= m; ++i) {
      double lhs = 0;
      for (std::size_t j = 0; j < n; ++j) lhs += A[i][j] * r.x[j];
      CHECK(lhs <= b[i] + 1e-8);
    }
  }
}
