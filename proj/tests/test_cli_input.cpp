#include <fstream>
#include <string>

#include "cli_input.hpp"
#include "doctest.h"
#include "nuq/error.hpp"

using namespace nuq;
using namespace nuq::cli;

TEST_CASE("vector text parsing") {
  CHECK(parse_vector_text("1.5\n-2\n\n# c\n3e-1\n", "x") == std::vector<double>{1.5, -2, 0.3});
  CHECK(parse_vector_text("  4 \r\n", "x") == std::vector<double>{4});
  try {
    parse_vector_text("1\n2\nabc\n", "f.txt");
    FAIL("expected error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("f.txt:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_vector_text("1 2\n", "x"), UsageError);
  CHECK_THROWS_AS(parse_vector_text("nan\n", "x"), UsageError);
  CHECK_THROWS_AS(parse_vector_text("", "x"), UsageError);
}

TEST_CASE("generators") {
  const auto g = load_input("gaussian:10", 3);
  CHECK(g.values.size() == 10);
  CHECK(load_input("gaussian:10", 3).values == g.values);
  CHECK(load_input("gaussian:10", 4).values != g.values);

  const auto s = load_input("sparse:50:7", 1);
  CHECK(s.values.size() == 50);
  int nz = 0;
  for (double x : s.values) nz += x != 0.0;
  CHECK(nz == 7);
  CHECK_THROWS_AS(load_input("sparse:5:7", 1), UsageError);
  CHECK_THROWS_AS(load_input("gaussian:0", 1), UsageError);
  CHECK_THROWS_AS(load_input("/nonexistent/file", 1), UsageError);
}

TEST_CASE("file input") {
  const std::string path = "cli_input_test_vector.txt";
  std::ofstream(path) << "# header\n0.5\n-1\n";
  CHECK(load_input(path, 0).values == std::vector<double>{0.5, -1});
}

TEST_CASE("level specs") {
  CHECK(parse_levels("0.5,3") == levels_exponential(0.5, 3));
  CHECK(parse_levels("uniform,2") == levels_uniform(2));
  CHECK_THROWS_AS(parse_levels("1.5,2"), UsageError);
  CHECK_THROWS_AS(parse_levels("0.5,0"), UsageError);
  CHECK_THROWS_AS(parse_levels("0.5"), UsageError);
  CHECK_THROWS_AS(parse_levels("0.5,61"), UsageError);
  CHECK(parse_int_list("1,2,4", "s") == std::vector<int>{1, 2, 4});
  CHECK(parse_double_list("0.5,2", "p") == std::vector<double>{0.5, 2});
  CHECK_THROWS_AS(parse_int_list("1,x", "s"), UsageError);
}
