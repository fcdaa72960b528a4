#include "cli_input.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nuq/error.hpp"
#include "nuq/random.hpp"

namespace nuq::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

constexpr std::uint64_t kGeneratorStream = 0x67656e;

}  // namespace

std::vector<double> parse_vector_text(const std::string& text, const std::string& source) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    double x = 0.0;
    if (!parse_double(t, x)) {
      throw UsageError(source + ":" + std::to_string(lineno) + ": not a decimal number: '" + t +
                       "'");
    }
    if (!std::isfinite(x)) {
      throw UsageError(source + ":" + std::to_string(lineno) + ": non-finite value");
    }
    values.push_back(x);
  }
  if (values.empty()) throw UsageError(source + ": no values");
  return values;
}

InputVector load_input(const std::string& spec, std::uint64_t seed) {
  const auto parts = split(spec, ':');
  const RandomSource rng = RandomSource(seed).substream(kGeneratorStream);
  if (parts.size() >= 2 && parts[0] == "gaussian") {
    std::uint64_t d = 0;
    if (parts.size() != 2 || !parse_u64(parts[1], d) || d == 0) {
      throw UsageError("generator must be gaussian:d with d >= 1");
    }
    InputVector in{std::vector<double>(d), spec};
    for (std::uint64_t i = 0; i < d; ++i) in.values[i] = rng.normal(i);
    return in;
  }
  if (parts.size() >= 2 && parts[0] == "sparse") {
    std::uint64_t d = 0, k = 0;
    if (parts.size() != 3 || !parse_u64(parts[1], d) || !parse_u64(parts[2], k) || d == 0 ||
        k > d) {
      throw UsageError("generator must be sparse:d:k with 1 <= d and k <= d");
    }
    // Partial Fisher-Yates for k distinct coordinates.
    std::vector<std::uint64_t> idx(d);
    for (std::uint64_t i = 0; i < d; ++i) idx[i] = i;
    const RandomSource pick = rng.substream(1), value = rng.substream(2);
    InputVector in{std::vector<double>(d, 0.0), spec};
    for (std::uint64_t i = 0; i < k; ++i) {
      std::swap(idx[i], idx[i + pick.below(i, d - i)]);
      in.values[idx[i]] = value.normal(i);
    }
    return in;
  }
  std::ifstream file(spec, std::ios::binary);
  if (!file) throw UsageError("cannot open input '" + spec + "'");
  std::ostringstream text;
  text << file.rdbuf();
  return {parse_vector_text(text.str(), spec), spec};
}

LevelSequence parse_levels(const std::string& spec) {
  const auto parts = split(spec, ',');
  std::uint64_t s = 0;
  if (parts.size() != 2 || !parse_u64(parts[1], s) || s < 1 || s > 60) {
    throw UsageError("--levels must be P,S or uniform,S with 1 <= S <= 60");
  }
  if (parts[0] == "uniform") return levels_uniform(static_cast<int>(s));
  double p = 0.0;
  if (!parse_double(parts[0], p) || !(p > 0.0 && p < 1.0)) {
    throw UsageError("--levels base P must lie in (0, 1), got '" + parts[0] + "'");
  }
  return levels_exponential(p, static_cast<int>(s));
}

std::vector<int> parse_int_list(const std::string& spec, const char* what) {
  std::vector<int> out;
  for (const auto& part : split(spec, ',')) {
    std::uint64_t v = 0;
    if (!parse_u64(part, v) || v > 1u << 30) {
      throw UsageError(std::string(what) + ": bad integer '" + part + "'");
    }
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& spec, const char* what) {
  std::vector<double> out;
  for (const auto& part : split(spec, ',')) {
    double v = 0.0;
    if (!parse_double(part, v) || !std::isfinite(v)) {
      throw UsageError(std::string(what) + ": bad number '" + part + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

}  // namespace nuq::cli
