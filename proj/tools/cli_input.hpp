#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuq/quantizer.hpp"

namespace nuq::cli {

/// Bad flag values or input files; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InputVector {
  std::vector<double> values;
  std::string descriptor;
};

/// Newline-delimited decimals. Blank lines and lines starting with '#' are
/// skipped. Errors carry the 1-based line number.
std::vector<double> parse_vector_text(const std::string& text, const std::string& source);

/// A path, or a generator: gaussian:d, sparse:d:k. Generators draw from `seed`.
InputVector load_input(const std::string& spec, std::uint64_t seed);

/// "P,S" for exponential levels (0, P^S, ..., P, 1) or "uniform,S".
LevelSequence parse_levels(const std::string& spec);

/// Comma-separated lists.
std::vector<int> parse_int_list(const std::string& spec, const char* what);
std::vector<double> parse_double_list(const std::string& spec, const char* what);

}  // namespace nuq::cli
