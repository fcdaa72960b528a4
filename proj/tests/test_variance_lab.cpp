#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "nuq/error.hpp"
#include "nuq/variance_lab.hpp"

using namespace nuq;
using namespace nuq::lab;

TEST_CASE("mc_mean basics") {
  const auto scheme = Scheme::make(SchemeKind::nuq, 1);
  const std::vector<double> v{1, 0};
  const auto m = mc_mean(v, scheme, 1000, 1);
  CHECK(m[0].mean == 1.0);
  CHECK(m[0].stderr == 0.0);
  CHECK(m[1].mean == 0.0);

  const std::vector<double> zero(4, 0.0);
  for (const auto& e : mc_mean(zero, scheme, 100, 1)) {
    CHECK(e.mean == 0.0);
    CHECK(e.stderr == 0.0);
  }
  CHECK_THROWS_AS(mc_mean(v, scheme, 99, 1), PreconditionError);
  CHECK_THROWS_AS(mc_variance(v, scheme, 10, 1), PreconditionError);
}

TEST_CASE("mc_mean is unbiased") {
  const std::vector<double> v{0.3, -1.2, 0.05, 2.0, 0.0, -0.7};
  for (auto kind : {SchemeKind::nuq, SchemeKind::qsgd_l2, SchemeKind::qsgd_inf}) {
    const auto m = mc_mean(v, Scheme::make(kind, 2), 100000, 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(m[i].mean - v[i]) <= 5 * m[i].stderr + 1e-15);
    }
  }
}

TEST_CASE("mc_variance examples") {
  const auto scheme = Scheme::make(SchemeKind::nuq, 1);
  const auto e = mc_variance(std::vector<double>{3, 4}, scheme, 100000, 4);
  CHECK(std::abs(e.mean - 2.5) <= 5 * e.stderr);

  const auto exact = mc_variance(std::vector<double>{1, 0, 0}, scheme, 500, 4);
  CHECK(exact.mean == 0.0);
  CHECK(exact.stderr == 0.0);

  const std::vector<double> flat(144, 1.0);
  const auto f = mc_variance(flat, Scheme::make(SchemeKind::nuq, 4), 20000, 5);
  CHECK(std::abs(f.mean - 144.0 / 8) <= 5 * f.stderr);
}

TEST_CASE("thread count does not change estimates") {
  const std::vector<double> v{0.3, -1.2, 0.05, 2.0, 0.6};
  const auto scheme = Scheme::make(SchemeKind::qsgd_l2, 3);
  const auto a = mc_variance(v, scheme, 7777, 9, 1);
  const auto b = mc_variance(v, scheme, 7777, 9, 5);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr == b.stderr);
  const auto ma = mc_mean(v, scheme, 5000, 9, 1);
  const auto mb = mc_mean(v, scheme, 5000, 9, 3);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(ma[i].mean == mb[i].mean);
}

TEST_CASE("stderr shrinks like n^-1/2") {
  const std::vector<double> v{0.3, -1.2, 0.05, 2.0, 0.6, 0.11, -0.4};
  const auto scheme = Scheme::make(SchemeKind::nuq, 2);
  const double e3 = mc_variance(v, scheme, 1000, 2).stderr;
  const double e4 = mc_variance(v, scheme, 10000, 2).stderr;
  const double e5 = mc_variance(v, scheme, 100000, 2).stderr;
  const double k = std::sqrt(10.0);
  CHECK(e3 / e4 > k / 2);
  CHECK(e3 / e4 < k * 2);
  CHECK(e4 / e5 > k / 2);
  CHECK(e4 / e5 < k * 2);
}

TEST_CASE("normalized variance") {
  const std::vector<double> g{0.5, -1.0, 2.0, 0.25};
  const std::vector<std::vector<double>> same{g, g, g};
  CHECK(normalized_variance(same, Scheme::make(SchemeKind::full_precision, 1), 10, 1) == 0.0);

  const auto scheme = Scheme::make(SchemeKind::nuq, 2);
  const double expect = closed_form_variance(g, scheme.levels) / (0.25 + 1 + 4 + 0.0625);
  const double got = normalized_variance(same, scheme, 40000, 2);
  CHECK(got == doctest::Approx(expect).epsilon(0.03));

  // Scale invariance: quantization is scale-equivariant draw by draw.
  std::vector<std::vector<double>> a{{1, 2, 3}, {2, 1, -1}}, b = a;
  for (auto& s : b) for (auto& x : s) x *= 4;
  const double ra = normalized_variance(a, scheme, 300, 3);
  const double rb = normalized_variance(b, scheme, 300, 3);
  CHECK(ra == doctest::Approx(rb).epsilon(1e-12));

  CHECK_THROWS_AS(normalized_variance({g}, scheme, 10, 1), PreconditionError);
  CHECK_THROWS_AS(normalized_variance({{0, 0}, {0, 0}}, scheme, 10, 1), PreconditionError);
}

TEST_CASE("uniform grid variance under the max norm") {
  // v = (1, 0.3), gap 1/2: r = 0.3 in [0, 0.5] -> 0.2 * 0.3.
  CHECK(uniform_grid_variance_linf(std::vector<double>{1, 0.3}, 0.5) == doctest::Approx(0.06));
  // Gap 1: no internal level.
  CHECK(uniform_grid_variance_linf(std::vector<double>{2, 1}, 1.0) == doctest::Approx(4 * 0.25));
  const std::vector<double> v{1, 0.3, -0.8};
  CHECK(uniform_grid_variance_linf(v, 1.0 / 3) ==
        doctest::Approx(closed_form_variance(v, levels_uniform(2), Normalization::linf)));
  CHECK_THROWS_AS(uniform_grid_variance_linf(v, 0.3), PreconditionError);
}

TEST_CASE("separation") {
  const SeparationInputs bad{4, 1.0, 0.5, 1};
  CHECK_FALSE(check_separation(bad).ok());
  CHECK_THROWS_AS(separation_vector(bad), PreconditionError);
  CHECK_FALSE(check_separation(bad).violation().empty());

  const auto in = find_separation();
  const auto c = check_separation(in);
  REQUIRE(c.ok());
  CHECK(c.violation().empty());
  const auto r = separation_vector(in);
  CHECK(r.separated());
  CHECK(r.var_nuq < r.var_qinf);
  CHECK(r.v[0] == 1.0);
  CHECK(r.v[1] == doctest::Approx(in.K1 / (in.d - 1.0)));

  // Homogeneity.
  std::vector<double> scaled = r.v;
  for (auto& x : scaled) x *= 3;
  const double vn = closed_form_variance(scaled, levels_exponential(0.5, in.s));
  const double vq = uniform_grid_variance_linf(scaled, 1.0 / in.s);
  CHECK(vn == doctest::Approx(9 * r.var_nuq));
  CHECK(vq == doctest::Approx(9 * r.var_qinf));
  CHECK(vn < vq);

  // Every admissible point in a small scan separates.
  for (int s = 1; s <= 3; ++s) {
    for (std::size_t d : {16u, 64u, 256u}) {
      for (int a = 1; a <= 16; ++a) {
        for (int b = 1; b < a; ++b) {
          const double K1 = std::sqrt(double(d)) * a / 16;
          const SeparationInputs x{d, K1, K1 * b / a, s};
          if (check_separation(x).ok()) CHECK(separation_vector(x).separated());
        }
      }
    }
  }
}

TEST_CASE("variance csv") {
  std::ostringstream out;
  write_variance_csv(out, {{3, "nuq", 2, 0.5, 0.51, 0.01}});
  CHECK(out.str().rfind("vector_id,scheme,s,closed_form,mc_mean,mc_stderr\n3,nuq,2,", 0) == 0);
}
