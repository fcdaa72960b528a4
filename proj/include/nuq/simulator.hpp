#pragma once

// Deterministic multi-worker SGD over small built-in problems.
//
// Every random draw comes from a counter-based stream keyed by
// (seed, purpose, iteration, worker), and aggregation always runs in ascending
// worker order, so a run is bit-reproducible regardless of `threads`.

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nuq/codec.hpp"
#include "nuq/quantizer.hpp"
#include "nuq/random.hpp"

namespace nuq::sim {

/// f(w) = (1/n) sum_r loss_r(w). Stochastic gradients average J row gradients
/// drawn uniformly with replacement, so they are unbiased for the rows sampled.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  /// One-line description including the generator parameters.
  virtual std::string descriptor() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t rows() const = 0;

  virtual double objective(std::span<const double> w) const = 0;
  virtual void gradient(std::span<const double> w, std::span<double> out) const = 0;
  /// Gradient of loss_r; (1/n) sum_r row_gradient = gradient.
  virtual void row_gradient(std::span<const double> w, std::size_t r,
                            std::span<double> out) const = 0;

  /// Known minimum value and minimizer, when available.
  virtual std::optional<double> min_value() const { return std::nullopt; }
  virtual std::optional<std::vector<double>> minimizer() const { return std::nullopt; }
  /// Smoothness constant of f.
  virtual double smoothness() const = 0;
  /// Smoothness of the individual row losses (governs stable step sizes).
  virtual double row_smoothness() const = 0;
};

/// f = ||A w - b||^2 / (2n).
class LeastSquares final : public Problem {
 public:
  LeastSquares(Eigen::MatrixXd A, Eigen::VectorXd b, std::string descriptor = "least_squares");
  std::string name() const override { return "least_squares"; }
  std::string descriptor() const override { return descriptor_; }
  std::size_t dimension() const override { return static_cast<std::size_t>(A_.cols()); }
  std::size_t rows() const override { return static_cast<std::size_t>(A_.rows()); }
  double objective(std::span<const double> w) const override;
  void gradient(std::span<const double> w, std::span<double> out) const override;
  void row_gradient(std::span<const double> w, std::size_t r, std::span<double> out) const override;
  std::optional<double> min_value() const override { return f_star_; }
  std::optional<std::vector<double>> minimizer() const override { return w_star_; }
  double smoothness() const override { return beta_; }
  double row_smoothness() const override { return row_beta_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  std::string descriptor_;
  double f_star_ = 0.0, beta_ = 0.0, row_beta_ = 0.0;
  std::vector<double> w_star_;
};

/// Labels y in {-1, +1}. Logistic: log(1 + exp(-y x.w)); sigmoid: 1/(1 + exp(y x.w)),
/// which is bounded and nonconvex. Both add (lambda/2)||w||^2.
class LinearClassifier final : public Problem {
 public:
  enum class Loss { logistic, sigmoid };
  LinearClassifier(Loss loss, Eigen::MatrixXd X, Eigen::VectorXd y, double lambda,
                   std::string descriptor);
  std::string name() const override {
    return loss_ == Loss::logistic ? "logistic" : "smooth_nonconvex";
  }
  std::string descriptor() const override { return descriptor_; }
  std::size_t dimension() const override { return static_cast<std::size_t>(X_.cols()); }
  std::size_t rows() const override { return static_cast<std::size_t>(X_.rows()); }
  double objective(std::span<const double> w) const override;
  void gradient(std::span<const double> w, std::span<double> out) const override;
  void row_gradient(std::span<const double> w, std::size_t r, std::span<double> out) const override;
  std::optional<double> min_value() const override { return f_star_; }
  std::optional<std::vector<double>> minimizer() const override { return w_star_; }
  double smoothness() const override { return beta_; }
  double row_smoothness() const override { return row_beta_; }

 private:
  Loss loss_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double lambda_;
  std::string descriptor_;
  double beta_ = 0.0, row_beta_ = 0.0;
  std::optional<double> f_star_;
  std::optional<std::vector<double>> w_star_;
};

/// A ~ N(0,1)^{n x d}, w_true ~ N(0,1)^d, b = A w_true + noise * N(0,1).
/// noise = 0 gives a consistent system (every row loss minimized at w_true).
std::unique_ptr<Problem> make_least_squares(std::size_t n, std::size_t d, double noise,
                                            std::uint64_t seed);
/// A = I, b = 0.
std::unique_ptr<Problem> make_least_squares_identity(std::size_t d);
std::unique_ptr<Problem> make_logistic(std::size_t n, std::size_t d, double lambda,
                                       std::uint64_t seed);
std::unique_ptr<Problem> make_smooth_nonconvex(std::size_t n, std::size_t d, std::uint64_t seed);

/// By name: least_squares | least_squares_consistent | logistic | smooth_nonconvex.
/// n = 16 d rows.
std::unique_ptr<Problem> built_in_problem(const std::string& name, std::size_t d,
                                          std::uint64_t seed);

// --- configuration -----------------------------------------------------------

enum class Schedule { constant, inv_sqrt };  // alpha, alpha / sqrt(t + 1)

struct SimConfig {
  std::size_t K = 1;
  std::size_t T = 1;
  double alpha = 0.1;
  Schedule schedule = Schedule::constant;
  Scheme scheme;
  std::size_t bucket = 0;  // 0: whole vector is one bucket
  CodecConfig codec;
  std::uint64_t seed = 0;
  std::size_t batch = 1;  // rows per stochastic gradient; 0 = exact gradient
  double mu = 0.0;
  int mode = 0;  // momentum l: 0 heavy ball, 1 Nesterov
  std::size_t tau_max = 0;
  Eigen::MatrixXd W;      // decentralized mixing matrix
  double radius = 0.0;    // > 0: project onto the L2 ball of this radius
  std::vector<double> w0; // empty: zeros
  std::size_t snapshot_every = 0;
  int threads = 1;

  double step(std::size_t t) const;
  /// Throws PreconditionError on invalid fields.
  void validate(const Problem& problem) const;
};

struct TraceRow {
  std::size_t t = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  std::uint64_t bits = 0;     // sum of measured bits over messages sent this iteration
  double disagreement = 0.0;  // decentralized runs only
};

struct SimTrace {
  std::vector<TraceRow> rows;  // T + 1 rows; row 0 is the initial point
  std::vector<double> final_params;
  std::vector<double> average_params;  // mean of w_0 .. w_T
  std::vector<std::pair<std::size_t, std::vector<double>>> snapshots;
  std::uint64_t total_bits = 0;
  std::uint64_t messages = 0;
  bool replicas_consistent = true;
  std::vector<std::string> notes;  // advisory diagnostics
};

// --- building blocks -----------------------------------------------------------

/// Average of `batch` row gradients with rows drawn from [begin, end); batch 0
/// gives the exact gradient of the rows in [begin, end).
void stochastic_gradient(const Problem& problem, std::span<const double> w, std::size_t begin,
                         std::size_t end, std::size_t batch, const RandomSource& rng,
                         std::span<double> out);

/// E||g||^2 of the oracle above at w, computed exactly from all row gradients.
double oracle_second_moment(const Problem& problem, std::span<const double> w,
                            std::size_t begin, std::size_t end, std::size_t batch);

/// One compressed message: the encoded stream (empty for full precision) and
/// its bit count.
struct Message {
  BitStream stream;
  std::vector<double> raw;  // full precision payload
  std::uint64_t bits = 0;
};

Message compress(const SimConfig& cfg, std::span<const double> g, const RandomSource& rng);
/// Receiver side; bit-exact inverse of the codec.
void decompress(const SimConfig& cfg, const Message& m, std::size_t d, std::span<double> out);

/// out = (sum_i msgs[i]) / K with the sum in ascending i.
void aggregate(const std::vector<std::vector<double>>& msgs, std::span<double> out);

// --- runs -----------------------------------------------------------------------

SimTrace run_data_parallel(const Problem& problem, const SimConfig& cfg);
SimTrace run_momentum(const Problem& problem, const SimConfig& cfg);
SimTrace run_async(const Problem& problem, const SimConfig& cfg);
SimTrace run_ecd_psgd(const Problem& problem, const SimConfig& cfg);

Eigen::MatrixXd ring_topology(std::size_t K);      // self 1/2, neighbours 1/4
Eigen::MatrixXd complete_topology(std::size_t K);  // all 1/K

/// Throws PreconditionError unless W is square K x K, symmetric, nonnegative,
/// has unit row sums and second-largest eigenvalue modulus < 1.
double validate_topology(const Eigen::MatrixXd& W, std::size_t K);

/// CSV with header iteration,objective,grad_norm,bits (plus disagreement when
/// `with_disagreement`), preceded by '#' metadata lines.
void write_trace_csv(std::ostream& out, const SimTrace& trace, bool with_disagreement,
                     const std::vector<std::string>& comments = {});

}  // namespace nuq::sim
