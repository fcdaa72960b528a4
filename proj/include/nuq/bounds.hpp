#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "nuq/levels.hpp"

namespace nuq::bounds {

/// Variance factor for exponential p = 1/2 levels: E||Q(v) - v||^2 <= eps_q ||v||^2.
/// Piecewise in d with the break at 2^{2s+1}; the two branches do not meet there.
double epsilon_q(int s, double d);

/// Variance bound from the explicit occupancy construction
///   d~_0 = d - 1/l_1^2,  d~_j = 1/l_j^2 - 1/l_{j+1}^2 (0 < j < s),  d~_s = 1/l_s^2,
/// summing min{tau_j^2 d~_j / 4, tau_j (sqrt(d~_j) - l_j d~_j)}. For p = 1/2 levels
/// this is d - 2^{2s}, 3 * 2^{2(s-j)}, 4. Requires d >= 1/l_1^2.
double epsilon_q_hat_exact(int s, double d, const LevelSequence& levels);

/// The j = 0 summand of epsilon_q_hat_exact.
double epsilon_q_hat_leading(int s, double d, const LevelSequence& levels);

enum class BoundMode {
  nominal,  // every (1 + o(1)) factor taken as 1
  slack,    // log terms multiplied by a user factor
};

/// n_{s,d} = 2^{2s} + 2^s sqrt(d), the expected-nonzero bound.
double expected_nonzeros_bound(int s, double d);

/// Expected-bits bound for one encoded gradient with C = b - 1.
/// Requires 2^{2s} + 2^s sqrt(d) <= d / e; throws PreconditionError otherwise.
double code_length_bound(int s, double d, int b, BoundMode mode = BoundMode::nominal,
                         double slack_factor = 1.0);

bool code_length_admissible(int s, double d) noexcept;

struct QsgdBounds {
  double eps = 0.0;     // min(d / s^2, sqrt(d) / s)
  double n_bits = 0.0;  // 3(s^2 + s sqrt d) + 1.5(s^2 + s sqrt d) log2(2(s^2 + d)/(s^2 + sqrt d)) + b
};

QsgdBounds qsgd_bounds(int s, double d, int b);

struct BoundReport {
  int s = 0;
  double d = 0.0;
  int b = 32;
  double eps_q = 0.0;
  std::optional<double> eps_q_hat;  // empty when d < 2^{2s}
  std::optional<double> n_q;        // empty when the code-length precondition fails
  double qsgd_eps = 0.0;
  double qsgd_n = 0.0;
};

BoundReport bound_report(int s, double d, int b);

struct LowerBoundConstruction {
  std::vector<double> v;  // all ones, so ||v||^2 = d
  double bound = 0.0;     // ||v||^2 l_1 sqrt(d) / 2
};

/// Requires d >= (2 / l_1)^2.
LowerBoundConstruction lower_bound_construction(std::size_t d, const LevelSequence& levels);

// --- worst-case programs ----------------------------------------------------
//
// Occupancy d_j counts coordinates whose normalized magnitude lies in bin j.
// Both programs maximize over the polytope
//   d - (d_0 + ... + d_j) <= 1/l_{j+1}^2   (j < s),   sum d_j <= d,   d_j >= 0.

struct WorstCase {
  double value = 0.0;
  std::vector<double> occupancies;
  bool converged = true;
  double restart_spread = 0.0;  // (max - min) / max over restarts
};

/// Objective sum_j min{tau_j^2 d_j / 4, tau_j (sqrt(d_j) - l_j d_j)}.
double qcqp_objective(const LevelSequence& levels, const std::vector<double>& occupancies);

/// True when the occupancies satisfy every polytope constraint within `tol`.
bool occupancies_feasible(const LevelSequence& levels, double d,
                          const std::vector<double>& occupancies, double tol = 1e-9);

/// LP with objective sum_j tau_j^2 d_j / 4, solved exactly by simplex.
WorstCase lp_bound(const LevelSequence& levels, double d);

/// s = 1 closed form max{tau_0^2 d, tau_0^2 d + tau_1^2/tau_0^2 - 1} / 4 (d >= 1/l_1^2).
double lp_bound_one_level(double l1, double d);

struct QcqpOptions {
  int restarts = 16;
  std::uint64_t seed = 0x5eed;
  double tolerance = 1e-11;   // relative duality-gap target
  double agreement = 5e-3;    // restart spread above this is non-convergence
};

/// Concave program with the min{...} objective. Interior-point (log barrier,
/// damped Newton) on the epigraph form from `restarts` random interior starts.
WorstCase qcqp_bound(const LevelSequence& levels, double d, const QcqpOptions& opt = {});

/// Same program by projected supergradient ascent on cumulative occupancies
/// with diminishing steps. Slower and less precise; kept as an independent
/// cross-check of qcqp_bound.
WorstCase qcqp_bound_supergradient(const LevelSequence& levels, double d, int iterations,
                                   int restarts = 16, std::uint64_t seed = 0x5eed);

struct OptimalP {
  double p = 0.5;
  double eps_qp = 0.0;
  double grid_p = 0.5;  // best point of the seeding grid
  double grid_eps = 0.0;
  bool converged = true;
};

/// argmin over p in [0.05, 0.95] of eps_QP for levels (0, p^s, ..., p, 1):
/// 19-point grid, then golden-section search inside the bracketing grid cell.
OptimalP optimal_p(int s, double d, const QcqpOptions& opt = {});

// --- momentum ----------------------------------------------------------------

struct MomentumBoundInputs {
  double mu = 0.0;  // [0, 1)
  int l = 0;        // 0 heavy ball, 1 Nesterov
  double alpha = 0.0;
  double T = 0.0;
  double K = 1.0;
  double B = 0.0;  // second-moment bound
  double V = 0.0;  // gradient-norm bound
  double beta = 0.0;
  double f_gap0 = 0.0;     // f(w_0) - f(w*)
  double dist0_sq = 0.0;   // ||w_0 - w*||^2
};

/// mu f_gap0 / ((1-mu)(T+1)) + (1-mu) dist0_sq / (2 alpha (T+1))
///   + alpha (1 + 2 l mu)(V^2 + (1 + eps_q) B / K) / (2 (1-mu)).
double momentum_convex_gap_bound(const MomentumBoundInputs& in, double eps_q);

// --- bit comparisons ---------------------------------------------------------

struct BitsComparison {
  double n_q = 0.0, eps_q = 0.0, nuq_product = 0.0;
  double qsgd_n = 0.0, qsgd_eps = 0.0, qsgd_product = 0.0;
  double ratio = 0.0;  // nuq_product / qsgd_product
};

BitsComparison bits_comparison(int s, double d, int b);

// --- sweeps ------------------------------------------------------------------

struct SweepRow {
  int s = 0;
  double d = 0.0;
  double p = 0.0;
  double eps_q = 0.0;
  double eps_lp = 0.0;
  double eps_qp = 0.0;
  std::optional<double> n_q;
};

/// Every (s, d, p) combination; rows in input order regardless of `threads`.
std::vector<SweepRow> sweep(const std::vector<int>& s_values, const std::vector<double>& d_values,
                            const std::vector<double>& p_values, int threads = 1,
                            const QcqpOptions& opt = {});

/// Header s,d,p,eps_q,eps_lp,eps_qp,n_q; empty n_q when inadmissible.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace nuq::bounds
