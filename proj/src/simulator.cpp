#include "nuq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "nuq/error.hpp"
#include "nuq/parallel.hpp"

namespace nuq::sim {

namespace {

using Vec = std::vector<double>;

Eigen::Map<const Eigen::VectorXd> view(std::span<const double> w) {
  return {w.data(), static_cast<Eigen::Index>(w.size())};
}
Eigen::Map<Eigen::VectorXd> view(std::span<double> w) {
  return {w.data(), static_cast<Eigen::Index>(w.size())};
}

// Stream purposes.
constexpr std::uint64_t kGradientStream = 1;
constexpr std::uint64_t kQuantStream = 2;
constexpr std::uint64_t kDelayStream = 3;

RandomSource stream(const SimConfig& cfg, std::uint64_t purpose, std::size_t t, std::size_t i) {
  return RandomSource(cfg.seed).substream(purpose).substream(t).substream(i);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double max_row_sq_norm(const Eigen::MatrixXd& A) {
  return A.rowwise().squaredNorm().maxCoeff();
}

double top_eigenvalue_gram(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A.transpose() * A, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

Eigen::MatrixXd gaussian_matrix(std::size_t n, std::size_t d, const RandomSource& rng) {
  Eigen::MatrixXd A(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) A(r, c) = rng.normal(r * d + c);
  }
  return A;
}

void project(const SimConfig& cfg, std::span<double> w) {
  if (cfg.radius <= 0.0) return;
  const double n = norm2(w);
  if (n > cfg.radius) {
    const double scale = cfg.radius / n;
    for (double& x : w) x *= scale;
  }
}

void check_finite(double f, std::size_t t) {
  if (!std::isfinite(f)) {
    throw NumericalError("non-finite objective at iteration " + std::to_string(t));
  }
}

// Anything the codec cannot carry is a divergence, not a caller error.
void check_message(const SimConfig& cfg, std::span<const double> g, std::size_t t) {
  double sq = 0.0;
  for (double x : g) {
    if (!std::isfinite(x)) {
      throw NumericalError("non-finite gradient at iteration " + std::to_string(t));
    }
    sq += x * x;
  }
  if (!cfg.scheme.quantizes()) return;
  const double limit = cfg.codec.float_bits == 32 ? std::numeric_limits<float>::max()
                                                  : std::numeric_limits<double>::max();
  const double norm = cfg.scheme.normalization() == Normalization::l2
                          ? std::sqrt(sq)
                          : std::abs(*std::max_element(g.begin(), g.end(), [](double a, double b) {
                              return std::abs(a) < std::abs(b);
                            }));
  if (!(norm <= limit)) {
    throw NumericalError("message norm overflows the norm field at iteration " + std::to_string(t));
  }
}

TraceRow record(const Problem& p, std::span<const double> w, std::size_t t, std::uint64_t bits) {
  Vec g(p.dimension());
  p.gradient(w, g);
  TraceRow row{t, p.objective(w), norm2(g), bits, 0.0};
  check_finite(row.objective, t);
  return row;
}

void add_snapshot(const SimConfig& cfg, SimTrace& trace, std::size_t t, std::span<const double> w) {
  if (cfg.snapshot_every > 0 && t % cfg.snapshot_every == 0) {
    trace.snapshots.emplace_back(t, Vec(w.begin(), w.end()));
  }
}

Vec initial_point(const Problem& p, const SimConfig& cfg) {
  return cfg.w0.empty() ? Vec(p.dimension(), 0.0) : cfg.w0;
}

void async_step_advisory(const Problem& p, const SimConfig& cfg, SimTrace& trace) {
  const double beta = p.smoothness();
  const double J = static_cast<double>(std::max<std::size_t>(cfg.batch, 1));
  const double tau = static_cast<double>(cfg.tau_max);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    double ahead = 0.0;
    for (std::size_t i = 1; i <= cfg.tau_max; ++i) ahead += cfg.step(t + i);
    const double lhs = beta * J * cfg.step(t) + 2.0 * beta * beta * J * J * tau * cfg.step(t) * ahead;
    if (lhs > 1.0) {
      std::ostringstream os;
      os << "step condition beta J a_t + 2 beta^2 J^2 tau a_t sum a_{t+i} <= 1 fails at t=" << t
         << " (" << lhs << ")";
      trace.notes.push_back(os.str());
      return;
    }
  }
}

// Synchronous engine shared by plain and momentum SGD. Every worker holds a
// replica; each replica decodes all K messages itself.
SimTrace run_sync(const Problem& p, const SimConfig& cfg, bool momentum) {
  cfg.validate(p);
  const std::size_t d = p.dimension(), K = cfg.K, n = p.rows();
  std::vector<Vec> w(K, initial_point(p, cfg));
  std::vector<Vec> y_prev(momentum ? K : 0, initial_point(p, cfg));
  std::vector<Vec> grads(K, Vec(d));
  std::vector<Message> msgs(K);
  std::vector<std::vector<Vec>> decoded(K, std::vector<Vec>(K, Vec(d)));
  std::vector<Vec> agg(K, Vec(d));

  SimTrace trace;
  trace.rows.push_back(record(p, w[0], 0, 0));
  Vec sum = w[0];
  add_snapshot(cfg, trace, 0, w[0]);

  for (std::size_t t = 0; t < cfg.T; ++t) {
    const double alpha = cfg.step(t);
    parallel_for(K, cfg.threads, [&](std::size_t i) {
      stochastic_gradient(p, w[i], 0, n, cfg.batch, stream(cfg, kGradientStream, t, i), grads[i]);
      check_message(cfg, grads[i], t);
      msgs[i] = compress(cfg, grads[i], stream(cfg, kQuantStream, t, i));
    });
    std::uint64_t bits = 0;
    for (const auto& m : msgs) bits += m.bits;

    parallel_for(K, cfg.threads, [&](std::size_t r) {
      for (std::size_t i = 0; i < K; ++i) decompress(cfg, msgs[i], d, decoded[r][i]);
      aggregate(decoded[r], agg[r]);
      Vec& x = w[r];
      if (!momentum || cfg.mu == 0.0) {
        for (std::size_t j = 0; j < d; ++j) x[j] -= alpha * agg[r][j];
      } else {
        const double la = cfg.mode * alpha;
        for (std::size_t j = 0; j < d; ++j) {
          const double y = x[j] - alpha * agg[r][j];
          const double yl = x[j] - la * agg[r][j];
          x[j] = y + cfg.mu * (yl - y_prev[r][j]);
          y_prev[r][j] = yl;
        }
      }
      project(cfg, x);
    });

    for (std::size_t r = 1; r < K && trace.replicas_consistent; ++r) {
      if (std::memcmp(w[r].data(), w[0].data(), d * sizeof(double)) != 0) {
        trace.replicas_consistent = false;
        trace.notes.push_back("replica " + std::to_string(r) + " diverged at iteration " +
                              std::to_string(t + 1));
      }
    }
    trace.rows.push_back(record(p, w[0], t + 1, bits));
    trace.total_bits += bits;
    trace.messages += cfg.scheme.quantizes() ? K : 0;
    for (std::size_t j = 0; j < d; ++j) sum[j] += w[0][j];
    add_snapshot(cfg, trace, t + 1, w[0]);
  }
  trace.final_params = w[0];
  trace.average_params = sum;
  for (double& x : trace.average_params) x /= static_cast<double>(cfg.T + 1);
  return trace;
}

}  // namespace

// --- problems -------------------------------------------------------------------

LeastSquares::LeastSquares(Eigen::MatrixXd A, Eigen::VectorXd b, std::string descriptor)
    : A_(std::move(A)), b_(std::move(b)), descriptor_(std::move(descriptor)) {
  if (A_.rows() != b_.size() || A_.rows() == 0) throw PreconditionError("A and b disagree");
  const double n = static_cast<double>(A_.rows());
  beta_ = top_eigenvalue_gram(A_) / n;
  row_beta_ = max_row_sq_norm(A_);
  const Eigen::VectorXd ws = A_.colPivHouseholderQr().solve(b_);
  w_star_.assign(ws.data(), ws.data() + ws.size());
  f_star_ = (A_ * ws - b_).squaredNorm() / (2.0 * n);
}

double LeastSquares::objective(std::span<const double> w) const {
  return (A_ * view(w) - b_).squaredNorm() / (2.0 * static_cast<double>(A_.rows()));
}

void LeastSquares::gradient(std::span<const double> w, std::span<double> out) const {
  view(out) = A_.transpose() * (A_ * view(w) - b_) / static_cast<double>(A_.rows());
}

void LeastSquares::row_gradient(std::span<const double> w, std::size_t r, std::span<double> out) const {
  const auto row = A_.row(static_cast<Eigen::Index>(r));
  const double residual = row.dot(view(w)) - b_[static_cast<Eigen::Index>(r)];
  view(out) = residual * row.transpose();
}

LinearClassifier::LinearClassifier(Loss loss, Eigen::MatrixXd X, Eigen::VectorXd y, double lambda,
                                   std::string descriptor)
    : loss_(loss), X_(std::move(X)), y_(std::move(y)), lambda_(lambda),
      descriptor_(std::move(descriptor)) {
  if (X_.rows() != y_.size() || X_.rows() == 0) throw PreconditionError("X and y disagree");
  // Curvature of the scalar loss: 1/4 for logistic, 1/(6 sqrt 3) for the sigmoid.
  const double c = loss_ == Loss::logistic ? 0.25 : 1.0 / (6.0 * std::sqrt(3.0));
  beta_ = c * top_eigenvalue_gram(X_) / static_cast<double>(X_.rows()) + lambda_;
  row_beta_ = c * max_row_sq_norm(X_) + lambda_;
  if (loss_ == Loss::logistic && lambda_ > 0.0) {
    // Strongly convex: Newton from zero.
    const std::size_t d = dimension();
    Vec w(d, 0.0), g(d);
    for (int it = 0; it < 100; ++it) {
      gradient(w, g);
      const Eigen::VectorXd m = (X_ * view(std::span<const double>(w))).cwiseProduct(y_);
      Eigen::VectorXd curv(m.size());
      for (Eigen::Index r = 0; r < m.size(); ++r) {
        const double sg = sigmoid(m[r]);
        curv[r] = sg * (1.0 - sg);
      }
      Eigen::MatrixXd H = X_.transpose() * curv.asDiagonal() * X_ / static_cast<double>(X_.rows());
      H.diagonal().array() += lambda_;
      const Eigen::VectorXd step = H.ldlt().solve(view(std::span<const double>(g)));
      view(std::span<double>(w)) -= step;
      if (step.norm() < 1e-14 * (1.0 + view(std::span<const double>(w)).norm())) break;
    }
    f_star_ = objective(w);
    w_star_ = w;
  }
}

double LinearClassifier::objective(std::span<const double> w) const {
  const Eigen::VectorXd m = (X_ * view(w)).cwiseProduct(y_);
  double total = 0.0;
  for (Eigen::Index r = 0; r < m.size(); ++r) {
    total += loss_ == Loss::logistic ? log1pexp(-m[r]) : sigmoid(-m[r]);
  }
  return total / static_cast<double>(m.size()) + 0.5 * lambda_ * view(w).squaredNorm();
}

void LinearClassifier::gradient(std::span<const double> w, std::span<double> out) const {
  const Eigen::VectorXd m = (X_ * view(w)).cwiseProduct(y_);
  Eigen::VectorXd coef(m.size());
  for (Eigen::Index r = 0; r < m.size(); ++r) {
    const double s = sigmoid(-m[r]);
    coef[r] = -(loss_ == Loss::logistic ? s : s * (1.0 - s)) * y_[r];
  }
  view(out) = X_.transpose() * coef / static_cast<double>(m.size()) + lambda_ * view(w);
}

void LinearClassifier::row_gradient(std::span<const double> w, std::size_t r,
                                    std::span<double> out) const {
  const auto row = X_.row(static_cast<Eigen::Index>(r));
  const double y = y_[static_cast<Eigen::Index>(r)];
  const double s = sigmoid(-y * row.dot(view(w)));
  const double coef = -(loss_ == Loss::logistic ? s : s * (1.0 - s)) * y;
  view(out) = coef * row.transpose() + lambda_ * view(w);
}

std::unique_ptr<Problem> make_least_squares(std::size_t n, std::size_t d, double noise,
                                            std::uint64_t seed) {
  const RandomSource rng(seed, 0x15);
  Eigen::MatrixXd A = gaussian_matrix(n, d, rng.substream(1));
  Eigen::VectorXd w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = rng.substream(2).normal(j);
  Eigen::VectorXd b = A * w;
  for (std::size_t r = 0; r < n; ++r) b[r] += noise * rng.substream(3).normal(r);
  std::ostringstream os;
  os << "least_squares(n=" << n << ",d=" << d << ",noise=" << noise << ",seed=" << seed << ")";
  return std::make_unique<LeastSquares>(std::move(A), std::move(b), os.str());
}

std::unique_ptr<Problem> make_least_squares_identity(std::size_t d) {
  return std::make_unique<LeastSquares>(Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d),
                                        "least_squares(identity,d=" + std::to_string(d) + ")");
}

namespace {

std::unique_ptr<Problem> make_classifier(LinearClassifier::Loss loss, std::size_t n, std::size_t d,
                                         double lambda, std::uint64_t seed, const char* name) {
  const RandomSource rng(seed, loss == LinearClassifier::Loss::logistic ? 0x10 : 0x50);
  Eigen::MatrixXd X = gaussian_matrix(n, d, rng.substream(1));
  Eigen::VectorXd w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = rng.substream(2).normal(j);
  Eigen::VectorXd y(n);
  const Eigen::VectorXd m = X * w / std::sqrt(static_cast<double>(d));
  for (std::size_t r = 0; r < n; ++r) {
    // Labels from a noisy linear teacher.
    y[r] = rng.substream(3).uniform(r) < sigmoid(4.0 * m[r]) ? 1.0 : -1.0;
  }
  std::ostringstream os;
  os << name << "(n=" << n << ",d=" << d << ",lambda=" << lambda << ",seed=" << seed << ")";
  return std::make_unique<LinearClassifier>(loss, std::move(X), std::move(y), lambda, os.str());
}

}  // namespace

std::unique_ptr<Problem> make_logistic(std::size_t n, std::size_t d, double lambda,
                                       std::uint64_t seed) {
  return make_classifier(LinearClassifier::Loss::logistic, n, d, lambda, seed, "logistic");
}

std::unique_ptr<Problem> make_smooth_nonconvex(std::size_t n, std::size_t d, std::uint64_t seed) {
  return make_classifier(LinearClassifier::Loss::sigmoid, n, d, 0.0, seed, "smooth_nonconvex");
}

std::unique_ptr<Problem> built_in_problem(const std::string& name, std::size_t d,
                                          std::uint64_t seed) {
  if (d < 1) throw PreconditionError("problem dimension must be >= 1");
  const std::size_t n = 16 * d;
  if (name == "least_squares") return make_least_squares(n, d, 1.0, seed);
  if (name == "least_squares_consistent") return make_least_squares(n, d, 0.0, seed);
  if (name == "logistic") return make_logistic(n, d, 1e-2, seed);
  if (name == "smooth_nonconvex") return make_smooth_nonconvex(n, d, seed);
  throw PreconditionError("unknown problem '" + name + "'");
}

// --- configuration ---------------------------------------------------------------

double SimConfig::step(std::size_t t) const {
  return schedule == Schedule::constant ? alpha : alpha / std::sqrt(static_cast<double>(t) + 1.0);
}

void SimConfig::validate(const Problem& problem) const {
  if (K < 1) throw PreconditionError("K must be >= 1");
  if (T < 1) throw PreconditionError("T must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw PreconditionError("alpha must be positive");
  if (!(mu >= 0.0 && mu < 1.0)) throw PreconditionError("momentum mu must lie in [0, 1)");
  if (mode != 0 && mode != 1) throw PreconditionError("momentum mode must be 0 or 1");
  if (!(radius >= 0.0)) throw PreconditionError("radius must be nonnegative");
  if (!w0.empty() && w0.size() != problem.dimension()) {
    throw PreconditionError("w0 has the wrong dimension");
  }
  if (codec.float_bits != 32 && codec.float_bits != 64) {
    throw PreconditionError("float_bits must be 32 or 64");
  }
  if (scheme.quantizes() && codec.level_code == LevelCode::log_power_of_two) {
    for (std::uint32_t k = 1; k <= scheme.levels.s() + 1; ++k) {
      level_code_value(k, scheme.levels, codec.level_code);
    }
  }
}

// --- building blocks -------------------------------------------------------------

void stochastic_gradient(const Problem& p, std::span<const double> w, std::size_t begin,
                         std::size_t end, std::size_t batch, const RandomSource& rng,
                         std::span<double> out) {
  if (begin >= end || end > p.rows()) throw PreconditionError("empty or invalid row range");
  const std::size_t d = p.dimension();
  thread_local Vec row;
  row.resize(d);
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t count = batch == 0 ? end - begin : batch;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t r = batch == 0 ? begin + k : begin + rng.below(k, end - begin);
    p.row_gradient(w, r, row);
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
  }
  for (double& x : out) x /= static_cast<double>(count);
}

double oracle_second_moment(const Problem& p, std::span<const double> w, std::size_t begin,
                            std::size_t end, std::size_t batch) {
  const std::size_t d = p.dimension();
  Vec row(d), mean(d, 0.0);
  double sq = 0.0;
  const double m = static_cast<double>(end - begin);
  for (std::size_t r = begin; r < end; ++r) {
    p.row_gradient(w, r, row);
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += row[j] / m;
      sq += row[j] * row[j] / m;
    }
  }
  double mean_sq = 0.0;
  for (double x : mean) mean_sq += x * x;
  if (batch == 0) return mean_sq;
  return mean_sq + (sq - mean_sq) / static_cast<double>(batch);
}

Message compress(const SimConfig& cfg, std::span<const double> g, const RandomSource& rng) {
  Message m;
  if (!cfg.scheme.quantizes()) {
    m.raw.assign(g.begin(), g.end());
    return m;
  }
  const auto& L = cfg.scheme.levels;
  if (cfg.bucket == 0) {
    m.stream = encode_gradient(quantize(g, L, rng, cfg.scheme.normalization()), L, cfg.codec);
  } else {
    const auto buckets = quantize_bucketed(g, BucketSpec{cfg.bucket}, cfg.scheme.normalization(), L, rng);
    m.stream = encode_buckets(buckets, L, cfg.codec);
  }
  m.bits = measured_bits(m.stream);
  return m;
}

void decompress(const SimConfig& cfg, const Message& m, std::size_t d, std::span<double> out) {
  if (!cfg.scheme.quantizes()) {
    std::copy(m.raw.begin(), m.raw.end(), out.begin());
    return;
  }
  const auto& L = cfg.scheme.levels;
  if (cfg.bucket == 0) {
    dequantize_into(decode_gradient(m.stream, d, L, cfg.codec), L, out);
  } else {
    const auto buckets = decode_buckets(m.stream, d, BucketSpec{cfg.bucket}, L, cfg.codec);
    const auto dense = dequantize_buckets(buckets, L);
    std::copy(dense.begin(), dense.end(), out.begin());
  }
}

void aggregate(const std::vector<Vec>& msgs, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& m : msgs) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += m[j];
  }
  const double K = static_cast<double>(msgs.size());
  for (double& x : out) x /= K;
}

// --- runs -----------------------------------------------------------------------

SimTrace run_data_parallel(const Problem& p, const SimConfig& cfg) { return run_sync(p, cfg, false); }

SimTrace run_momentum(const Problem& p, const SimConfig& cfg) { return run_sync(p, cfg, true); }

SimTrace run_async(const Problem& p, const SimConfig& cfg) {
  cfg.validate(p);
  const std::size_t d = p.dimension(), n = p.rows();
  // history[t % (tau_max + 1)] holds w_t.
  std::vector<Vec> history(cfg.tau_max + 1, initial_point(p, cfg));
  Vec w = history[0];
  std::vector<Vec> decoded(1, Vec(d));
  Vec g(d), agg(d);

  SimTrace trace;
  async_step_advisory(p, cfg, trace);
  trace.rows.push_back(record(p, w, 0, 0));
  Vec sum = w;
  add_snapshot(cfg, trace, 0, w);
  const RandomSource delays = RandomSource(cfg.seed).substream(kDelayStream);

  for (std::size_t t = 0; t < cfg.T; ++t) {
    std::size_t delay = cfg.tau_max > 0 ? delays.below(t, cfg.tau_max + 1) : 0;
    if (delay > t) delay = 0;
    // One gradient per iteration, so draws are keyed by t alone; the sending
    // worker (t mod K) does not change the randomness.
    const Vec& stale = history[(t - delay) % (cfg.tau_max + 1)];
    stochastic_gradient(p, stale, 0, n, cfg.batch, stream(cfg, kGradientStream, t, 0), g);
    check_message(cfg, g, t);
    const Message msg = compress(cfg, g, stream(cfg, kQuantStream, t, 0));
    decompress(cfg, msg, d, decoded[0]);
    aggregate(decoded, agg);
    const double alpha = cfg.step(t);
    for (std::size_t j = 0; j < d; ++j) w[j] -= alpha * agg[j];
    project(cfg, w);
    history[(t + 1) % (cfg.tau_max + 1)] = w;

    trace.rows.push_back(record(p, w, t + 1, msg.bits));
    trace.total_bits += msg.bits;
    trace.messages += cfg.scheme.quantizes() ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) sum[j] += w[j];
    add_snapshot(cfg, trace, t + 1, w);
  }
  trace.final_params = w;
  trace.average_params = sum;
  for (double& x : trace.average_params) x /= static_cast<double>(cfg.T + 1);
  return trace;
}

Eigen::MatrixXd ring_topology(std::size_t K) {
  if (K < 3) throw PreconditionError("ring topology needs K >= 3");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(K, K);
  for (std::size_t i = 0; i < K; ++i) {
    W(i, i) = 0.5;
    W(i, (i + 1) % K) = 0.25;
    W(i, (i + K - 1) % K) = 0.25;
  }
  return W;
}

Eigen::MatrixXd complete_topology(std::size_t K) {
  if (K < 1) throw PreconditionError("K must be >= 1");
  return Eigen::MatrixXd::Constant(K, K, 1.0 / static_cast<double>(K));
}

double validate_topology(const Eigen::MatrixXd& W, std::size_t K) {
  const auto k = static_cast<Eigen::Index>(K);
  if (W.rows() != k || W.cols() != k) throw PreconditionError("W must be K x K");
  constexpr double tol = 1e-12;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(W.row(i).sum() - 1.0) > tol) throw PreconditionError("W rows must sum to 1");
    for (Eigen::Index j = 0; j < k; ++j) {
      if (W(i, j) < 0.0) throw PreconditionError("W entries must be nonnegative");
      if (std::abs(W(i, j) - W(j, i)) > tol) throw PreconditionError("W must be symmetric");
    }
  }
  if (K == 1) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W, Eigen::EigenvaluesOnly);
  // Ascending eigenvalues; the largest is 1 for a stochastic W.
  const auto& ev = eig.eigenvalues();
  const double rho = std::max(std::abs(ev[0]), std::abs(ev[k - 2]));
  if (!(rho < 1.0 - 1e-12)) {
    throw PreconditionError("W second-largest eigenvalue modulus must be < 1 (got " +
                            std::to_string(rho) + ")");
  }
  return rho;
}

SimTrace run_ecd_psgd(const Problem& p, const SimConfig& cfg) {
  cfg.validate(p);
  validate_topology(cfg.W, cfg.K);
  const std::size_t d = p.dimension(), K = cfg.K, n = p.rows();
  if (n < K) throw PreconditionError("fewer rows than workers");

  std::vector<Vec> w(K, initial_point(p, cfg)), estimate(K, initial_point(p, cfg));
  std::vector<Vec> half(K, Vec(d)), next(K, Vec(d)), grads(K, Vec(d)), decoded(K, Vec(d));
  std::vector<Message> msgs(K);

  auto mean_of = [&](const std::vector<Vec>& xs) {
    Vec m(d, 0.0);
    for (const auto& x : xs) {
      for (std::size_t j = 0; j < d; ++j) m[j] += x[j];
    }
    for (double& x : m) x /= static_cast<double>(K);
    return m;
  };

  SimTrace trace;
  Vec avg = mean_of(w);
  trace.rows.push_back(record(p, avg, 0, 0));
  Vec sum = avg;
  add_snapshot(cfg, trace, 0, avg);

  for (std::size_t t = 1; t <= cfg.T; ++t) {
    const double alpha = cfg.step(t - 1);
    const double tt = static_cast<double>(t);
    parallel_for(K, cfg.threads, [&](std::size_t i) {
      const std::size_t begin = i * n / K, end = (i + 1) * n / K;
      stochastic_gradient(p, w[i], begin, end, cfg.batch, stream(cfg, kGradientStream, t, i), grads[i]);
      std::fill(half[i].begin(), half[i].end(), 0.0);
      for (std::size_t j = 0; j < K; ++j) {
        const double wij = cfg.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (wij == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) half[i][c] += wij * estimate[j][c];
      }
      for (std::size_t c = 0; c < d; ++c) next[i][c] = half[i][c] - alpha * grads[i][c];
      project(cfg, next[i]);
      Vec z(d);
      for (std::size_t c = 0; c < d; ++c) z[c] = (1.0 - tt / 2.0) * w[i][c] + (tt / 2.0) * next[i][c];
      check_message(cfg, z, t);
      msgs[i] = compress(cfg, z, stream(cfg, kQuantStream, t, i));
    });

    // Disagreement of the mixed iterates w_{t+1/2}.
    double disagreement = 0.0;
    bool identical = true;
    for (std::size_t i = 1; i < K && identical; ++i) {
      identical = std::memcmp(half[i].data(), half[0].data(), d * sizeof(double)) == 0;
    }
    if (!identical) {
      const Vec m = mean_of(half);
      for (const auto& h : half) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (h[c] - m[c]) * (h[c] - m[c]);
        disagreement = std::max(disagreement, std::sqrt(s));
      }
    }

    std::uint64_t bits = 0;
    for (std::size_t j = 0; j < K; ++j) {
      bits += msgs[j].bits;
      decompress(cfg, msgs[j], d, decoded[j]);
      for (std::size_t c = 0; c < d; ++c) {
        estimate[j][c] = (1.0 - 2.0 / tt) * estimate[j][c] + (2.0 / tt) * decoded[j][c];
      }
    }
    std::swap(w, next);

    avg = mean_of(w);
    TraceRow row = record(p, avg, t, bits);
    row.disagreement = disagreement;
    trace.rows.push_back(row);
    trace.total_bits += bits;
    trace.messages += cfg.scheme.quantizes() ? K : 0;
    for (std::size_t j = 0; j < d; ++j) sum[j] += avg[j];
    add_snapshot(cfg, trace, t, avg);
  }
  trace.final_params = avg;
  trace.average_params = sum;
  for (double& x : trace.average_params) x /= static_cast<double>(cfg.T + 1);
  return trace;
}

void write_trace_csv(std::ostream& out, const SimTrace& trace, bool with_disagreement,
                     const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  for (const auto& note : trace.notes) out << "# note: " << note << '\n';
  out << "iteration,objective,grad_norm,bits";
  if (with_disagreement) out << ",disagreement";
  out << '\n';
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : trace.rows) {
    line.str("");
    line << r.t << ',' << r.objective << ',' << r.grad_norm << ',' << r.bits;
    if (with_disagreement) line << ',' << r.disagreement;
    out << line.str() << '\n';
  }
}

}  // namespace nuq::sim
