#include "nuq/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "nuq/error.hpp"
#include "nuq/parallel.hpp"
#include "nuq/random.hpp"
#include "nuq/simplex.hpp"

namespace nuq::bounds {

namespace {

void check_sd(int s, double d) {
  if (s < 1) throw PreconditionError("s must be >= 1");
  if (!(d >= 1.0) || !std::isfinite(d)) throw PreconditionError("d must be finite and >= 1");
}

double inv_sq(double l) { return 1.0 / (l * l); }

// Lower limits of the cumulative occupancies C_j = d_0 + ... + d_j:
// C_j >= d - 1/l_{j+1}^2 for j < s.
std::vector<double> cumulative_floor(const LevelSequence& L, double d) {
  std::vector<double> lb(L.s());
  for (std::size_t j = 0; j < L.s(); ++j) lb[j] = d - inv_sq(L[j + 1]);
  return lb;
}

double phi(const LevelSequence& L, std::size_t j, double dj) {
  const double tau = L.gap(j);
  const double root = std::sqrt(std::max(dj, 0.0));
  return std::min(tau * tau * dj / 4.0, tau * (root - L[j] * dj));
}

// --- interior point on the epigraph form --------------------------------------
//
// x = (d_0..d_s, z_0..z_s), maximize sum z subject to
//   C_j - lb_j >= 0, d - sum d >= 0, d_j >= 0,
//   tau_j^2 d_j / 4 - z_j >= 0, tau_j (sqrt d_j - l_j d_j) - z_j >= 0.

class Barrier {
 public:
  Barrier(const LevelSequence& L, double d) : L_(L), d_(d), n_(L.s() + 1), lb_(cumulative_floor(L, d)) {}

  std::size_t constraint_count() const { return L_.s() + 1 + 3 * n_; }

  // Every slack strictly positive?
  bool interior(const Eigen::VectorXd& x) const {
    double c = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double dj = x[j];
      if (!(dj > 0.0)) return false;
      c += dj;
      if (j < L_.s() && !(c - lb_[j] > 0.0)) return false;
      const double tau = L_.gap(j);
      if (!(tau * tau * dj / 4.0 - x[n_ + j] > 0.0)) return false;
      if (!(tau * (std::sqrt(dj) - L_[j] * dj) - x[n_ + j] > 0.0)) return false;
    }
    return d_ - c > 0.0;
  }

  double value(const Eigen::VectorXd& x, double t) const {
    double f = 0.0, c = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double dj = x[j], zj = x[n_ + j], tau = L_.gap(j);
      c += dj;
      f += t * zj + std::log(dj) + std::log(tau * tau * dj / 4.0 - zj) +
           std::log(tau * (std::sqrt(dj) - L_[j] * dj) - zj);
      if (j < L_.s()) f += std::log(c - lb_[j]);
    }
    return f + std::log(d_ - c);
  }

  void derivatives(const Eigen::VectorXd& x, double t, Eigen::VectorXd& g,
                   Eigen::MatrixXd& H) const {
    const std::size_t m = 2 * n_;
    g = Eigen::VectorXd::Zero(m);
    H = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd a(m);
    auto linear = [&](double slack) {
      g += a / slack;
      H.noalias() -= (a * a.transpose()) / (slack * slack);
    };
    double c = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double dj = x[j], zj = x[n_ + j], tau = L_.gap(j), l = L_[j];
      g[n_ + j] += t;
      c += dj;

      a.setZero();
      a[j] = 1.0;
      linear(dj);

      if (j < L_.s()) {
        a.setZero();
        a.head(j + 1).setOnes();
        linear(c - lb_[j]);
      }

      a.setZero();
      a[j] = tau * tau / 4.0;
      a[n_ + j] = -1.0;
      linear(tau * tau * dj / 4.0 - zj);

      const double root = std::sqrt(dj);
      const double slack = tau * (root - l * dj) - zj;
      a.setZero();
      a[j] = tau * (0.5 / root - l);
      a[n_ + j] = -1.0;
      linear(slack);
      H(j, j) += -tau / (4.0 * dj * root) / slack;
    }
    a.setZero();
    a.head(n_).setConstant(-1.0);
    linear(d_ - c);
  }

  Eigen::VectorXd start(const std::vector<double>& w) const {
    // C_j = m_j (1 - w_j) + d w_j with nondecreasing floors m_j and increasing
    // w_j in (0, 1) is strictly increasing and strictly inside every bound.
    Eigen::VectorXd x(2 * n_);
    double prev_c = 0.0, floor = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      if (j < L_.s()) floor = std::max(floor, lb_[j]);
      const double c = floor * (1.0 - w[j]) + d_ * w[j];
      x[j] = c - prev_c;
      prev_c = c;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const double tau = L_.gap(j), dj = x[j];
      const double cap = std::min(tau * tau * dj / 4.0, tau * (std::sqrt(dj) - L_[j] * dj));
      x[n_ + j] = cap - 0.5 * (1.0 + std::abs(cap));
    }
    return x;
  }

  std::vector<double> solve(Eigen::VectorXd x, double tolerance) const {
    const double m = static_cast<double>(constraint_count());
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    double t = 1.0;
    for (int outer = 0; outer < 200; ++outer) {
      for (int it = 0; it < 200; ++it) {
        derivatives(x, t, g, H);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-H);
        const Eigen::VectorXd step = ldlt.solve(g);
        const double decrement = g.dot(step);
        if (!(decrement > 1e-14)) break;
        const double f0 = value(x, t);
        double a = 1.0;
        Eigen::VectorXd trial = x + step;
        while (a > 1e-16 && (!interior(trial) || value(trial, t) < f0 + 0.25 * a * decrement)) {
          a *= 0.5;
          trial = x + a * step;
        }
        if (a <= 1e-16) break;
        x = trial;
        if (decrement < 1e-12) break;
      }
      const double objective = x.tail(n_).sum();
      if (m / t <= tolerance * std::max(1.0, std::abs(objective))) break;
      t *= 10.0;
    }
    return std::vector<double>(x.data(), x.data() + n_);
  }

 private:
  const LevelSequence& L_;
  double d_;
  std::size_t n_;
  std::vector<double> lb_;
};

// Projection onto {lo_j <= C_j <= d, C nondecreasing} for nondecreasing lo:
// isotonic regression (pool adjacent violators) followed by clipping.
void project_cumulative(std::vector<double>& c, const std::vector<double>& lo, double d) {
  std::vector<double> mean;
  std::vector<std::size_t> count;
  for (double v : c) {
    mean.push_back(v);
    count.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const std::size_t k = mean.size() - 1;
      const double total = mean[k - 1] * count[k - 1] + mean[k] * count[k];
      count[k - 1] += count[k];
      mean[k - 1] = total / static_cast<double>(count[k - 1]);
      mean.pop_back();
      count.pop_back();
    }
  }
  std::size_t i = 0;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    for (std::size_t k = 0; k < count[b]; ++k, ++i) c[i] = std::clamp(mean[b], lo[i], d);
  }
}

double phi_slope(const LevelSequence& L, std::size_t j, double dj) {
  const double tau = L.gap(j);
  const double linear = tau * tau * dj / 4.0;
  const double root = std::sqrt(std::max(dj, 0.0));
  if (root == 0.0 || linear <= tau * (root - L[j] * dj)) return tau * tau / 4.0;
  return tau * (0.5 / root - L[j]);
}

}  // namespace

double epsilon_q(int s, double d) {
  check_sd(s, d);
  if (d < std::ldexp(1.0, 2 * s + 1)) return 0.125 + std::ldexp(d, -2 * s - 2);
  return std::ldexp(std::sqrt(d), -s) - 0.875;
}

double epsilon_q_hat_leading(int s, double d, const LevelSequence& levels) {
  check_sd(s, d);
  if (levels.s() != static_cast<std::size_t>(s)) throw PreconditionError("levels do not have s internal levels");
  const double d0 = d - inv_sq(levels[1]);
  if (d0 < 0.0) {
    throw PreconditionError("occupancy construction needs d >= 1/l_1^2 (" +
                            std::to_string(inv_sq(levels[1])) + ")");
  }
  return phi(levels, 0, d0);
}

double epsilon_q_hat_exact(int s, double d, const LevelSequence& levels) {
  double total = epsilon_q_hat_leading(s, d, levels);
  for (int j = 1; j < s; ++j) total += phi(levels, j, inv_sq(levels[j]) - inv_sq(levels[j + 1]));
  return total + phi(levels, s, inv_sq(levels[s]));
}

double expected_nonzeros_bound(int s, double d) {
  check_sd(s, d);
  return std::ldexp(1.0, 2 * s) + std::ldexp(std::sqrt(d), s);
}

bool code_length_admissible(int s, double d) noexcept {
  if (s < 1 || !(d >= 1.0)) return false;
  return std::ldexp(1.0, 2 * s) + std::ldexp(std::sqrt(d), s) <= d / std::exp(1.0);
}

double code_length_bound(int s, double d, int b, BoundMode mode, double slack_factor) {
  check_sd(s, d);
  if (b < 1) throw PreconditionError("b must be positive");
  if (!code_length_admissible(s, d)) {
    throw PreconditionError("code-length bound needs 2^{2s} + 2^s sqrt(d) <= d/e; got " +
                            std::to_string(expected_nonzeros_bound(s, d)) + " > " +
                            std::to_string(d / std::exp(1.0)));
  }
  const double k = mode == BoundMode::slack ? slack_factor : 1.0;
  if (!(k >= 1.0)) throw PreconditionError("slack factor must be >= 1");
  const double n = expected_nonzeros_bound(s, d);
  return (b - 1.0) + 3.0 * n + k * n * std::log2(d / n) +
         k * n * std::log2(std::log2(8.0 * (std::ldexp(1.0, 2 * s) + d) / n));
}

QsgdBounds qsgd_bounds(int s, double d, int b) {
  check_sd(s, d);
  const double ss = static_cast<double>(s) * s;
  const double root = std::sqrt(d);
  const double m = ss + s * root;
  return {std::min(d / ss, root / s),
          3.0 * m + 1.5 * m * std::log2(2.0 * (ss + d) / (ss + root)) + b};
}

BoundReport bound_report(int s, double d, int b) {
  BoundReport r;
  r.s = s;
  r.d = d;
  r.b = b;
  r.eps_q = epsilon_q(s, d);
  if (d >= std::ldexp(1.0, 2 * s)) r.eps_q_hat = epsilon_q_hat_exact(s, d, levels_exponential(0.5, s));
  if (code_length_admissible(s, d)) r.n_q = code_length_bound(s, d, b);
  const auto q = qsgd_bounds(s, d, b);
  r.qsgd_eps = q.eps;
  r.qsgd_n = q.n_bits;
  return r;
}

LowerBoundConstruction lower_bound_construction(std::size_t d, const LevelSequence& levels) {
  const double l1 = levels[1];
  const double need = (2.0 / l1) * (2.0 / l1);
  if (static_cast<double>(d) < need) {
    throw PreconditionError("lower-bound construction needs d >= (2/l_1)^2 = " +
                            std::to_string(need));
  }
  LowerBoundConstruction out;
  out.v.assign(d, 1.0);
  const double dd = static_cast<double>(d);
  out.bound = dd * l1 * std::sqrt(dd) / 2.0;
  return out;
}

double qcqp_objective(const LevelSequence& levels, const std::vector<double>& occupancies) {
  if (occupancies.size() != levels.s() + 1) throw PreconditionError("need s+1 occupancies");
  double total = 0.0;
  for (std::size_t j = 0; j < occupancies.size(); ++j) total += phi(levels, j, occupancies[j]);
  return total;
}

bool occupancies_feasible(const LevelSequence& levels, double d,
                          const std::vector<double>& x, double tol) {
  if (x.size() != levels.s() + 1) return false;
  const double slack = tol * std::max(1.0, d);
  double c = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < -slack) return false;
    c += x[j];
    if (j < levels.s() && d - c > inv_sq(levels[j + 1]) + slack) return false;
  }
  return c <= d + slack;
}

WorstCase lp_bound(const LevelSequence& levels, double d) {
  if (!(d >= 1.0)) throw PreconditionError("d must be >= 1");
  // Occupancies are solved as fractions of d so the tableau stays O(1) at large d.
  const std::size_t n = levels.s() + 1;
  std::vector<std::vector<double>> A;
  std::vector<double> b;
  for (std::size_t j = 0; j < levels.s(); ++j) {
    std::vector<double> row(n, 0.0);
    for (std::size_t i = 0; i <= j; ++i) row[i] = -1.0;
    A.push_back(row);
    b.push_back(inv_sq(levels[j + 1]) / d - 1.0);
  }
  A.emplace_back(n, 1.0);
  b.push_back(1.0);
  std::vector<double> c(n);
  for (std::size_t j = 0; j < n; ++j) c[j] = levels.gap(j) * levels.gap(j) / 4.0;
  auto r = simplex_maximize(A, b, c);
  if (r.status != LpStatus::optimal) throw NumericalError("worst-case LP did not solve");
  for (double& x : r.x) x *= d;
  return {r.value * d, r.x, true, 0.0};
}

double lp_bound_one_level(double l1, double d) {
  if (!(l1 > 0.0 && l1 < 1.0)) throw PreconditionError("l_1 must lie in (0, 1)");
  if (d < inv_sq(l1)) throw PreconditionError("closed form needs d >= 1/l_1^2");
  const double t0 = l1, t1 = 1.0 - l1;
  return std::max(t0 * t0 * d, t0 * t0 * d + t1 * t1 / (t0 * t0) - 1.0) / 4.0;
}

WorstCase qcqp_bound(const LevelSequence& levels, double d, const QcqpOptions& opt) {
  if (!(d >= 1.0) || !std::isfinite(d)) throw PreconditionError("d must be finite and >= 1");
  if (opt.restarts < 1) throw PreconditionError("need at least one restart");
  const Barrier barrier(levels, d);
  const std::size_t n = levels.s() + 1;
  const RandomSource rng(opt.seed);

  WorstCase best;
  best.value = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
      // Restart 0 starts from evenly spread occupancies.
      w[j] = r == 0 ? (j + 1.0) / (n + 1.0)
                    : 0.01 + 0.98 * rng.uniform(static_cast<std::uint64_t>(r) * 64 + j);
    }
    std::sort(w.begin(), w.end());
    for (std::size_t j = 1; j < n; ++j) {
      if (w[j] <= w[j - 1]) w[j] = std::nextafter(w[j - 1], 1.0);
    }
    auto occ = barrier.solve(barrier.start(w), opt.tolerance);
    const double v = qcqp_objective(levels, occ);
    if (!std::isfinite(v)) throw NumericalError("QCQP solve produced a non-finite value");
    lo = std::min(lo, v);
    if (v > best.value) {
      best.value = v;
      best.occupancies = std::move(occ);
    }
  }
  best.restart_spread = best.value > 0.0 ? (best.value - lo) / best.value : 0.0;
  best.converged = best.restart_spread <= opt.agreement;
  return best;
}

WorstCase qcqp_bound_supergradient(const LevelSequence& levels, double d, int iterations,
                                   int restarts, std::uint64_t seed) {
  if (!(d >= 1.0)) throw PreconditionError("d must be >= 1");
  const std::size_t n = levels.s() + 1;
  const auto lb = cumulative_floor(levels, d);
  std::vector<double> lo(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double prev = j > 0 ? lo[j - 1] : 0.0;
    lo[j] = j < levels.s() ? std::max(prev, lb[j]) : prev;
  }
  const RandomSource rng(seed);
  auto occupancies = [&](const std::vector<double>& c) {
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = std::max(0.0, c[j] - (j ? c[j - 1] : 0.0));
    return x;
  };

  WorstCase best;
  best.value = -std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> c(n);
    for (std::size_t j = 0; j < n; ++j) c[j] = d * rng.uniform(static_cast<std::uint64_t>(r) * 64 + j);
    std::sort(c.begin(), c.end());
    project_cumulative(c, lo, d);
    double run_best = -std::numeric_limits<double>::infinity();
    std::vector<double> run_x;
    std::vector<double> grad(n);
    for (int k = 1; k <= iterations; ++k) {
      const auto x = occupancies(c);
      const double v = qcqp_objective(levels, x);
      if (v > run_best) {
        run_best = v;
        run_x = x;
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        grad[j] = phi_slope(levels, j, x[j]) - (j + 1 < n ? phi_slope(levels, j + 1, x[j + 1]) : 0.0);
        norm += grad[j] * grad[j];
      }
      if (norm == 0.0) break;
      const double step = 0.5 * d / std::sqrt(static_cast<double>(k) * norm);
      for (std::size_t j = 0; j < n; ++j) c[j] += step * grad[j];
      project_cumulative(c, lo, d);
    }
    worst = std::min(worst, run_best);
    if (run_best > best.value) {
      best.value = run_best;
      best.occupancies = run_x;
    }
  }
  best.restart_spread = best.value > 0.0 ? (best.value - worst) / best.value : 0.0;
  best.converged = best.restart_spread <= 5e-3;
  return best;
}

OptimalP optimal_p(int s, double d, const QcqpOptions& opt) {
  check_sd(s, d);
  bool converged = true;
  auto eval = [&](double p) {
    const auto r = qcqp_bound(levels_exponential(p, s), d, opt);
    converged = converged && r.converged;
    return r.value;
  };
  constexpr int kGrid = 19;
  std::vector<double> grid(kGrid);
  int best = 0;
  for (int k = 0; k < kGrid; ++k) {
    grid[k] = eval(0.05 * (k + 1));
    if (grid[k] < grid[best]) best = k;
  }
  OptimalP out;
  out.grid_p = 0.05 * (best + 1);
  out.grid_eps = grid[best];

  double a = 0.05 * std::max(best, 1), b = 0.05 * (std::min(best + 1, kGrid - 2) + 1);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  while (b - a > 1e-6) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - ratio * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + ratio * (b - a);
      f2 = eval(x2);
    }
  }
  if (f1 <= f2) {
    out.p = x1;
    out.eps_qp = f1;
  } else {
    out.p = x2;
    out.eps_qp = f2;
  }
  if (out.grid_eps < out.eps_qp) {
    out.p = out.grid_p;
    out.eps_qp = out.grid_eps;
  }
  out.converged = converged;
  return out;
}

double momentum_convex_gap_bound(const MomentumBoundInputs& in, double eps_q) {
  if (!(in.mu >= 0.0 && in.mu < 1.0)) throw PreconditionError("momentum mu must lie in [0, 1)");
  if (in.l != 0 && in.l != 1) throw PreconditionError("momentum mode l must be 0 or 1");
  if (!(in.alpha > 0.0)) throw PreconditionError("alpha must be positive");
  if (!(in.K >= 1.0)) throw PreconditionError("K must be >= 1");
  if (in.T < 0 || in.B < 0 || in.V < 0 || in.beta < 0 || in.f_gap0 < 0 || in.dist0_sq < 0 ||
      eps_q < 0) {
    throw PreconditionError("momentum bound inputs must be nonnegative");
  }
  const double mu = in.mu, T1 = in.T + 1.0;
  return mu * in.f_gap0 / ((1.0 - mu) * T1) + (1.0 - mu) * in.dist0_sq / (2.0 * in.alpha * T1) +
         in.alpha * (1.0 + 2.0 * in.l * mu) * (in.V * in.V + (1.0 + eps_q) * in.B / in.K) /
             (2.0 * (1.0 - mu));
}

BitsComparison bits_comparison(int s, double d, int b) {
  BitsComparison r;
  r.n_q = code_length_bound(s, d, b);
  r.eps_q = epsilon_q(s, d);
  r.nuq_product = r.n_q * r.eps_q;
  const auto q = qsgd_bounds(s, d, b);
  r.qsgd_n = q.n_bits;
  r.qsgd_eps = q.eps;
  r.qsgd_product = q.n_bits * q.eps;
  r.ratio = r.nuq_product / r.qsgd_product;
  return r;
}

std::vector<SweepRow> sweep(const std::vector<int>& s_values, const std::vector<double>& d_values,
                            const std::vector<double>& p_values, int threads,
                            const QcqpOptions& opt) {
  std::vector<SweepRow> rows;
  for (int s : s_values) {
    for (double d : d_values) {
      for (double p : p_values) rows.push_back({s, d, p, 0.0, 0.0, 0.0, std::nullopt});
    }
  }
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    auto& row = rows[i];
    const auto L = levels_exponential(row.p, row.s);
    row.eps_q = epsilon_q(row.s, row.d);
    row.eps_lp = lp_bound(L, row.d).value;
    row.eps_qp = qcqp_bound(L, row.d, opt).value;
    if (code_length_admissible(row.s, row.d)) row.n_q = code_length_bound(row.s, row.d, 32);
  });
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  const auto old = out.precision(17);
  out << "s,d,p,eps_q,eps_lp,eps_qp,n_q\n";
  for (const auto& r : rows) {
    out << r.s << ',' << r.d << ',' << r.p << ',' << r.eps_q << ',' << r.eps_lp << ','
        << r.eps_qp << ',';
    if (r.n_q) out << *r.n_q;
    out << '\n';
  }
  out.precision(old);
}

}  // namespace nuq::bounds
