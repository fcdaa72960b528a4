#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "nuq/bounds.hpp"
#include "nuq/error.hpp"
#include "nuq/simulator.hpp"

using namespace nuq;
using namespace nuq::sim;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_trace(const SimTrace& a, const SimTrace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t t = 0; t < a.rows.size(); ++t) {
    const auto &x = a.rows[t], &y = b.rows[t];
    if (std::memcmp(&x.objective, &y.objective, sizeof(double)) ||
        std::memcmp(&x.grad_norm, &y.grad_norm, sizeof(double)) || x.bits != y.bits) {
      return false;
    }
  }
  return bit_equal(a.final_params, b.final_params);
}

SimConfig base_config(const Problem& p, SchemeKind kind = SchemeKind::nuq) {
  SimConfig c;
  c.K = 4;
  c.T = 100;
  c.alpha = 0.5 / p.row_smoothness();
  c.scheme = Scheme::make(kind, 4);
  c.seed = 21;
  c.batch = 1;
  return c;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("gradients match central finite differences") {
  for (const char* name : {"least_squares", "logistic", "smooth_nonconvex"}) {
    const auto p = built_in_problem(name, 6, 3);
    std::vector<double> w(6), g(6), row(6), acc(6, 0.0);
    for (std::size_t i = 0; i < 6; ++i) w[i] = 0.1 * (static_cast<double>(i) - 2.5);
    p->gradient(w, g);
    for (std::size_t i = 0; i < 6; ++i) {
      const double h = 1e-5;
      auto wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double fd = (p->objective(wp) - p->objective(wm)) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(1.0, std::abs(g[i])));
    }
    for (std::size_t r = 0; r < p->rows(); ++r) {
      p->row_gradient(w, r, row);
      for (std::size_t i = 0; i < 6; ++i) acc[i] += row[i] / static_cast<double>(p->rows());
    }
    for (std::size_t i = 0; i < 6; ++i) CHECK(acc[i] == doctest::Approx(g[i]).epsilon(1e-10));
  }
}

TEST_CASE("minimizers") {
  const auto ls = built_in_problem("least_squares", 8, 1);
  std::vector<double> g(8);
  ls->gradient(*ls->minimizer(), g);
  for (double x : g) CHECK(std::abs(x) < 1e-10);
  CHECK(ls->objective(*ls->minimizer()) == doctest::Approx(*ls->min_value()));

  const auto lg = built_in_problem("logistic", 8, 1);
  REQUIRE(lg->minimizer());
  lg->gradient(*lg->minimizer(), g);
  for (double x : g) CHECK(std::abs(x) < 1e-9);

  CHECK_THROWS_AS(built_in_problem("nope", 8, 1), PreconditionError);
}

TEST_CASE("stochastic oracle is unbiased") {
  const auto p = built_in_problem("least_squares", 5, 2);
  std::vector<double> w{0.3, -0.2, 0.1, 0.5, -0.4}, g(5), exact(5);
  p->gradient(w, exact);
  const int n = 10000;
  std::vector<double> mean(5, 0.0), sq(5, 0.0);
  const RandomSource r(4);
  for (int k = 0; k < n; ++k) {
    stochastic_gradient(*p, w, 0, p->rows(), 2, r.substream(k), g);
    for (int i = 0; i < 5; ++i) {
      mean[i] += g[i] / n;
      sq[i] += g[i] * g[i] / n;
    }
  }
  double second = 0;
  for (int i = 0; i < 5; ++i) {
    const double se = std::sqrt((sq[i] - mean[i] * mean[i]) / n);
    CHECK(std::abs(mean[i] - exact[i]) <= 5 * se);
    second += sq[i];
  }
  CHECK(second == doctest::Approx(oracle_second_moment(*p, w, 0, p->rows(), 2)).epsilon(0.05));
  stochastic_gradient(*p, w, 0, p->rows(), 0, r, g);
  CHECK(dist2(g, exact) < 1e-28);
}

TEST_CASE("identity problem with exact gradients") {
  const auto p = make_least_squares_identity(3);
  SimConfig c;
  c.K = 1;
  c.T = 5;
  c.alpha = 0.5;  // row smoothness 3 for A = I; f = ||w||^2 / 6, gradient w / 3
  c.batch = 0;
  c.w0 = {3, 0, -3};
  c.scheme = Scheme::make(SchemeKind::full_precision, 1);
  const auto t = run_data_parallel(*p, c);
  REQUIRE(t.rows.size() == 6);
  const double factor = std::pow(1 - 0.5 / 3, 5);
  CHECK(t.final_params[0] == doctest::Approx(3 * factor));
  CHECK(t.final_params[2] == doctest::Approx(-3 * factor));
  CHECK(t.total_bits == 0);
  for (std::size_t i = 1; i < t.rows.size(); ++i) CHECK(t.rows[i].objective < t.rows[i - 1].objective);
}

TEST_CASE("data-parallel runs") {
  const auto p = built_in_problem("least_squares", 16, 5);
  auto c = base_config(*p);
  const auto a = run_data_parallel(*p, c);
  CHECK(a.rows.size() == c.T + 1);
  CHECK(a.replicas_consistent);
  CHECK(a.messages == c.K * c.T);
  std::uint64_t bits = 0;
  for (const auto& r : a.rows) bits += r.bits;
  CHECK(bits == a.total_bits);
  CHECK(a.rows[0].bits == 0);
  for (std::size_t t = 1; t < a.rows.size(); ++t) CHECK(a.rows[t].bits >= c.K * 33);

  c.threads = 4;
  CHECK(same_trace(a, run_data_parallel(*p, c)));

  c.bucket = 5;
  const auto bucketed = run_data_parallel(*p, c);
  CHECK(bucketed.replicas_consistent);
  CHECK_FALSE(same_trace(a, bucketed));

  auto fp = base_config(*p, SchemeKind::full_precision);
  fp.batch = 0;
  fp.alpha = 1 / p->smoothness();
  const auto full = run_data_parallel(*p, fp);
  CHECK(full.total_bits == 0);
  CHECK(full.messages == 0);
  for (std::size_t t = 1; t < full.rows.size(); ++t) {
    CHECK(full.rows[t].objective <= full.rows[t - 1].objective + 1e-15);
  }
}

TEST_CASE("average parameters include the initial point") {
  const auto p = make_least_squares_identity(2);
  SimConfig c;
  c.T = 1;
  c.alpha = 1.5;  // f = ||w||^2 / 4, gradient w / 2; w_1 = w_0 / 4
  c.batch = 0;
  c.w0 = {4, 8};
  const auto t = run_data_parallel(*p, c);
  CHECK(t.final_params[0] == doctest::Approx(1.0));
  CHECK(t.average_params[0] == doctest::Approx(2.5));
  CHECK(t.average_params[1] == doctest::Approx(5.0));
}

TEST_CASE("momentum") {
  const auto p = built_in_problem("least_squares", 16, 6);
  auto c = base_config(*p);
  CHECK(same_trace(run_data_parallel(*p, c), run_momentum(*p, c)));
  c.mu = 0.5;
  c.mode = 0;
  const auto hb = run_momentum(*p, c);
  c.mode = 1;
  const auto nest = run_momentum(*p, c);
  CHECK_FALSE(same_trace(hb, nest));
  CHECK(hb.replicas_consistent);
  c.mu = 1.0;
  CHECK_THROWS_AS(run_momentum(*p, c), PreconditionError);
}

TEST_CASE("asynchronous runs") {
  const auto p = built_in_problem("logistic", 8, 2);
  auto c = base_config(*p);
  auto sync = c;
  sync.K = 1;
  c.tau_max = 0;
  CHECK(same_trace(run_async(*p, c), run_data_parallel(*p, sync)));
  auto single = c;
  single.K = 1;
  CHECK(same_trace(run_async(*p, single), run_data_parallel(*p, sync)));
  c.tau_max = 3;
  const auto a = run_async(*p, c);
  CHECK(a.rows.size() == c.T + 1);
  CHECK(std::isfinite(a.rows.back().objective));
  c.threads = 3;
  CHECK(same_trace(a, run_async(*p, c)));

  auto loud = c;
  loud.alpha = 10 / p->smoothness();
  loud.T = 3;
  bool noted = false;
  for (const auto& n : run_async(*p, loud).notes) noted |= n.find("step condition") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("topologies") {
  const auto W = ring_topology(8);
  const double rho = validate_topology(W, 8);
  CHECK(rho < 1);
  CHECK(W(0, 0) == 0.5);
  CHECK(W(0, 1) == 0.25);
  CHECK(W(0, 7) == 0.25);
  CHECK(validate_topology(complete_topology(5), 5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(ring_topology(2), PreconditionError);

  Eigen::MatrixXd asym = W;
  asym(0, 1) = 0.3;
  asym(0, 0) = 0.45;
  CHECK_THROWS_AS(validate_topology(asym, 8), PreconditionError);
  CHECK_THROWS_AS(validate_topology(Eigen::MatrixXd::Identity(4, 4), 4), PreconditionError);
  Eigen::MatrixXd neg = Eigen::MatrixXd::Constant(3, 3, 0.5);
  neg.diagonal().setConstant(0.0);
  neg(0, 1) = neg(1, 0) = 1.25;
  neg(0, 2) = neg(2, 0) = -0.25;
  neg(1, 2) = neg(2, 1) = -0.25;
  CHECK_THROWS_AS(validate_topology(neg, 3), PreconditionError);
  CHECK_THROWS_AS(validate_topology(W, 4), PreconditionError);
}

TEST_CASE("decentralized runs") {
  const auto p = built_in_problem("least_squares_consistent", 8, 3);
  SimConfig c;
  c.K = 4;
  c.T = 30;
  c.batch = 0;
  c.seed = 2;
  c.alpha = 0.2 / p->smoothness();
  c.scheme = Scheme::make(SchemeKind::full_precision, 1);
  c.W = complete_topology(4);
  const auto t = run_ecd_psgd(*p, c);
  REQUIRE(t.rows.size() == 31);
  for (std::size_t i = 2; i < t.rows.size(); ++i) CHECK(t.rows[i].disagreement == 0.0);

  c.W = ring_topology(4);
  c.scheme = Scheme::make(SchemeKind::nuq, 4);
  const auto q = run_ecd_psgd(*p, c);
  CHECK(q.total_bits > 0);
  c.threads = 4;
  CHECK(same_trace(q, run_ecd_psgd(*p, c)));
  c.W = Eigen::MatrixXd::Identity(4, 4);
  CHECK_THROWS_AS(run_ecd_psgd(*p, c), PreconditionError);
}

TEST_CASE("quantization noise stays within the variance factor") {
  const auto p = built_in_problem("least_squares", 64, 7);
  const auto scheme = Scheme::make(SchemeKind::nuq, 4);
  const double eps = bounds::epsilon_q(4, 64);
  std::vector<double> w(64, 0.1), g(64), q(64);
  const RandomSource r(5);
  const int n = 2000;
  double err = 0, err2 = 0, gsq = 0;
  for (int k = 0; k < n; ++k) {
    stochastic_gradient(*p, w, 0, p->rows(), 1, r.substream(2 * k), g);
    apply_scheme_dense(scheme, g, r.substream(2 * k + 1), q);
    const double e = dist2(q, g);
    err += e / n;
    err2 += e * e / n;
    for (double x : g) gsq += x * x / n;
  }
  const double se = std::sqrt((err2 - err * err) / n);
  CHECK(err <= eps * gsq + 5 * se);
}

TEST_CASE("compress and aggregate") {
  const auto p = built_in_problem("least_squares", 16, 9);
  auto c = base_config(*p);
  std::vector<double> g(16), back(16);
  for (std::size_t i = 0; i < 16; ++i) g[i] = std::sin(static_cast<double>(i));
  const auto m = compress(c, g, RandomSource(3));
  CHECK(m.bits == m.stream.bit_length());
  decompress(c, m, 16, back);
  for (std::size_t i = 0; i < 16; ++i) CHECK((back[i] == 0.0 || (back[i] > 0) == (g[i] > 0)));

  std::vector<std::vector<double>> msgs{{1, 2}, {3, 4}, {5, 9}};
  std::vector<double> out(2);
  aggregate(msgs, out);
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 5.0);
}

TEST_CASE("divergence is reported with the iteration") {
  const auto p = built_in_problem("least_squares", 8, 1);
  auto c = base_config(*p);
  c.alpha = 100;
  c.T = 200;
  try {
    run_data_parallel(*p, c);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("trace csv") {
  SimTrace t;
  t.rows = {{0, 1.5, 2.0, 0, 0.0}, {1, 0.25, 1.0, 66, 0.0}};
  t.notes = {"hello"};
  std::ostringstream a, b;
  write_trace_csv(a, t, false, {"x=1"});
  CHECK(a.str() == "# x=1\n# note: hello\niteration,objective,grad_norm,bits\n0,1.5,2,0\n1,0.25,1,66\n");
  write_trace_csv(b, t, true);
  CHECK(b.str().find("iteration,objective,grad_norm,bits,disagreement\n0,1.5,2,0,0\n") != std::string::npos);
}
