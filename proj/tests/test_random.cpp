#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "nuq/random.hpp"

using namespace nuq;

// Known-answer vectors published with the Random123 reference implementation.
TEST_CASE("philox4x32-10 known answers") {
  using B = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draws are pure functions of (seed, stream, index)") {
  const RandomSource a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  for (std::uint64_t i = 0; i < 100; ++i) {
    CHECK(a.uniform(i) == b.uniform(i));
    CHECK(a.normal(i) == b.normal(i));
  }
  int same_c = 0, same_d = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    same_c += a.uniform(i) == c.uniform(i);
    same_d += a.uniform(i) == d.uniform(i);
  }
  CHECK(same_c == 0);
  CHECK(same_d == 0);
  // Reverse-order evaluation gives the same values.
  std::vector<double> fwd, rev(100);
  for (std::uint64_t i = 0; i < 100; ++i) fwd.push_back(a.uniform(i));
  for (std::uint64_t i = 100; i-- > 0;) rev[i] = a.uniform(i);
  CHECK(fwd == rev);
}

TEST_CASE("substreams are distinct and stable") {
  const RandomSource base(5);
  std::set<std::uint64_t> ids;
  for (std::uint64_t t = 0; t < 1000; ++t) ids.insert(base.substream(t).stream());
  CHECK(ids.size() == 1000);
  CHECK(base.substream(3).substream(4) == RandomSource(5).substream(3).substream(4));
  CHECK(base.substream(3).substream(4).stream() != base.substream(4).substream(3).stream());
}

TEST_CASE("uniform moments") {
  const RandomSource r(1);
  const int n = 200000;
  double sum = 0, sq = 0, mn = 1, mx = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform(static_cast<std::uint64_t>(i));
    sum += u;
    sq += u * u;
    mn = std::min(mn, u);
    mx = std::max(mx, u);
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  const double mean = sum / n;
  CHECK(std::abs(mean - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sq / n - 1.0 / 3) < 5 * std::sqrt(4.0 / 45 / n));
}

TEST_CASE("normal moments") {
  const RandomSource r(2, 3);
  const int n = 200000;
  double sum = 0, sq = 0, q4 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(static_cast<std::uint64_t>(i));
    REQUIRE(std::isfinite(x));
    sum += x;
    sq += x * x;
    q4 += x * x * x * x;
  }
  CHECK(std::abs(sum / n) < 5 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1) < 5 * std::sqrt(2.0 / n));
  CHECK(std::abs(q4 / n - 3) < 5 * std::sqrt(96.0 / n));
}

TEST_CASE("below is in range and roughly uniform") {
  const RandomSource r(9);
  for (std::uint64_t n : {1ull, 2ull, 5ull, 1000ull}) {
    std::vector<int> counts(std::min<std::uint64_t>(n, 5), 0);
    for (std::uint64_t i = 0; i < 50000; ++i) {
      const auto k = r.below(i, n);
      REQUIRE(k < n);
      if (n <= 5) ++counts[k];
    }
    if (n <= 5) {
      const double expect = 50000.0 / static_cast<double>(n);
      for (int c : counts) CHECK(std::abs(c - expect) < 5 * std::sqrt(expect));
    }
  }
}
