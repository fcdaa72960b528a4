// nuq: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 precondition violation.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cli_input.hpp"
#include "nuq/bounds.hpp"
#include "nuq/codec.hpp"
#include "nuq/error.hpp"
#include "nuq/kernels.hpp"
#include "nuq/parallel.hpp"
#include "nuq/quantizer.hpp"
#include "nuq/simulator.hpp"
#include "nuq/variance_lab.hpp"

namespace {

using Json = nlohmann::ordered_json;
using namespace nuq;
using nuq::cli::UsageError;

constexpr int kFormatVersion = 1;

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kPrecondition = 3 };

// Seeds are taken as strings so a missing value cannot silently default.
std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw UsageError("--seed must be a nonnegative integer, got '" + text + "'");
  }
  return v;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json levels_json(const LevelSequence& levels) {
  Json j = Json::array();
  for (double l : levels.values()) j.push_back(l);
  return j;
}

Json optional_number(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

// --levels default depends on the scheme: exponential p = 1/2 for nuq, uniform otherwise.
Scheme resolve_scheme(const std::string& name, const std::string& levels) {
  SchemeKind kind;
  try {
    kind = parse_scheme(name);
  } catch (const PreconditionError& e) {
    throw UsageError(e.what());
  }
  Scheme scheme{kind};
  if (kind == SchemeKind::full_precision) return scheme;
  if (levels.empty()) return Scheme::make(kind, 4);
  scheme.levels = cli::parse_levels(levels);
  return scheme;
}

LevelCode parse_level_code(const std::string& name) {
  if (name == "index") return LevelCode::level_index;
  if (name == "log") return LevelCode::log_power_of_two;
  throw UsageError("--level-code must be index or log");
}

std::string normalization_name(Normalization n) { return n == Normalization::l2 ? "l2" : "linf"; }

// Flags shared by quantizing commands.
struct SchemeFlags {
  std::string scheme = "nuq";
  std::string levels;
  std::size_t bucket = 0;
  std::string level_code = "index";
  int float_bits = 32;

  void add(CLI::App* app) {
    app->add_option("--scheme", scheme, "full_precision | nuq | qsgd_l2 | qsgd_inf")
        ->capture_default_str();
    app->add_option("--levels", levels,
                    "P,S for levels (0, P^S, ..., P, 1) or uniform,S "
                    "(default 0.5,4 for nuq, uniform,4 otherwise)");
    app->add_option("--bucket", bucket, "bucket size, 0 for one bucket")->capture_default_str();
    app->add_option("--level-code", level_code, "index | log")->capture_default_str();
    app->add_option("--float-bits", float_bits, "norm width, 32 or 64")
        ->check(CLI::IsMember({32, 64}))
        ->capture_default_str();
  }
  CodecConfig codec() const { return {float_bits, parse_level_code(level_code)}; }
};

// --- quantize ------------------------------------------------------------------

struct QuantizeArgs {
  std::string input, seed, output, stream_out;
  SchemeFlags flags;
};

Json quantized_json(const QuantizedVector& q) {
  Json entries = Json::array();
  for (const auto& e : q.entries) entries.push_back(Json::array({e.index, e.sign, e.level}));
  return Json{{"dimension", q.dimension}, {"norm", q.norm}, {"entries", entries}};
}

int cmd_quantize(const QuantizeArgs& a) {
  const std::uint64_t seed = parse_seed(a.seed);
  const Scheme scheme = resolve_scheme(a.flags.scheme, a.flags.levels);
  if (!scheme.quantizes()) throw UsageError("quantize needs a quantizing scheme");
  const CodecConfig codec = a.flags.codec();
  const auto input = cli::load_input(a.input, seed);
  const auto& v = input.values;
  const auto& L = scheme.levels;
  const RandomSource rng = RandomSource(seed).substream(0x7175616e);

  std::vector<QuantizedVector> buckets;
  if (a.flags.bucket == 0) {
    buckets.push_back(quantize(v, L, rng, scheme.normalization()));
  } else {
    buckets = quantize_bucketed(v, BucketSpec{a.flags.bucket}, scheme.normalization(), L, rng);
  }
  const BitStream stream = encode_buckets(buckets, L, codec);

  double variance = 0.0, nnz_expected = 0.0;
  std::size_t nnz = 0;
  const std::size_t size = a.flags.bucket == 0 ? v.size() : a.flags.bucket;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const auto part = std::span<const double>(v).subspan(b * size, buckets[b].dimension);
    variance += closed_form_variance(part, L, scheme.normalization());
    nnz_expected += expected_nnz(part, L, scheme.normalization());
    nnz += buckets[b].entries.size();
  }
  Json jb = Json::array();
  for (const auto& q : buckets) jb.push_back(quantized_json(q));

  Json out;
  out["format_version"] = kFormatVersion;
  out["command"] = "quantize";
  out["input"] = input.descriptor;
  out["seed"] = seed;
  out["scheme"] = scheme_name(scheme.kind);
  out["normalization"] = normalization_name(scheme.normalization());
  out["levels"] = levels_json(L);
  out["bucket"] = a.flags.bucket;
  out["level_code"] = a.flags.level_code;
  out["float_bits"] = a.flags.float_bits;
  out["buckets"] = jb;
  out["stats"] = Json{{"dimension", v.size()},
                      {"input_sq_norm", kernels::sum_squares(v)},
                      {"closed_form_variance", variance},
                      {"expected_nnz", nnz_expected},
                      {"nnz", nnz},
                      {"measured_bits", measured_bits(stream)},
                      {"bits_per_coordinate",
                       static_cast<double>(measured_bits(stream)) / static_cast<double>(v.size())}};
  if (!a.stream_out.empty()) {
    const auto bytes = serialize_stream(stream);
    std::ofstream f(a.stream_out, std::ios::binary);
    if (!f) throw UsageError("cannot write '" + a.stream_out + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  emit(a.output, dump(out));
  return kOk;
}

// --- codec-bench -----------------------------------------------------------------

struct CodecBenchArgs {
  std::size_t d = 1024, count = 1000, huffman_sample = 0;
  std::string seed, output;
  SchemeFlags flags;
  int threads = 1;
  bool timing = false;
};

int cmd_codec_bench(const CodecBenchArgs& a) {
  const std::uint64_t seed = parse_seed(a.seed);
  const Scheme scheme = resolve_scheme(a.flags.scheme, a.flags.levels);
  if (!scheme.quantizes()) throw UsageError("codec-bench needs a quantizing scheme");
  if (a.d < 1 || a.count < 1) throw UsageError("--d and --count must be >= 1");
  const CodecConfig codec = a.flags.codec();
  const auto& L = scheme.levels;
  const std::size_t s = L.s();
  const RandomSource base(seed);

  auto draw = [&](std::size_t k) {
    std::vector<double> g(a.d);
    const RandomSource gen = base.substream(1).substream(k);
    for (std::size_t i = 0; i < a.d; ++i) g[i] = gen.normal(i);
    const RandomSource rng = base.substream(2).substream(k);
    if (a.flags.bucket == 0) return std::vector<QuantizedVector>{quantize(g, L, rng, scheme.normalization())};
    return quantize_bucketed(g, BucketSpec{a.flags.bucket}, scheme.normalization(), L, rng);
  };

  std::optional<HuffmanCodebook> book;
  if (a.huffman_sample > 0) {
    std::vector<std::uint32_t> sample;
    for (std::size_t k = 0; k < a.huffman_sample; ++k) {
      for (const auto& q : draw(a.count + k)) {
        for (const auto& e : q.entries) sample.push_back(e.level);
      }
    }
    book = huffman_from_sample(sample, s);
  }

  std::vector<std::size_t> bits(a.count), huff_bits(a.count, 0), nnz(a.count);
  std::vector<char> ok(a.count, 0);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(a.count, a.threads, [&](std::size_t k) {
    const auto buckets = draw(k);
    const BitStream stream = encode_buckets(buckets, L, codec);
    bits[k] = measured_bits(stream);
    const auto back = decode_buckets(stream, a.d, BucketSpec{a.flags.bucket == 0 ? a.d : a.flags.bucket}, L, codec);
    bool same = back.size() == buckets.size() && encode_buckets(back, L, codec) == stream;
    std::size_t entries = 0;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      same = same && back[b].entries == buckets[b].entries;
      entries += buckets[b].entries.size();
    }
    nnz[k] = entries;
    if (book) {
      BitWriter w;
      for (const auto& q : buckets) huffman_encode(w, q, L, *book, codec);
      const BitStream hs = std::move(w).finish();
      huff_bits[k] = measured_bits(hs);
      BitReader r(hs);
      for (std::size_t b = 0; same && b < buckets.size(); ++b) {
        same = huffman_decode(r, buckets[b].dimension, L, *book, codec).entries == buckets[b].entries;
      }
      same = same && r.remaining() == 0;
    }
    ok[k] = same ? 1 : 0;
  });
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  lab::Moments m, mh, mn;
  for (std::size_t k = 0; k < a.count; ++k) {
    m.add(static_cast<double>(bits[k]));
    mh.add(static_cast<double>(huff_bits[k]));
    mn.add(static_cast<double>(nnz[k]));
  }
  const bool all_ok = std::all_of(ok.begin(), ok.end(), [](char c) { return c == 1; });

  Json out;
  out["format_version"] = kFormatVersion;
  out["command"] = "codec-bench";
  out["seed"] = seed;
  out["d"] = a.d;
  out["count"] = a.count;
  out["scheme"] = scheme_name(scheme.kind);
  out["levels"] = levels_json(L);
  out["bucket"] = a.flags.bucket;
  out["level_code"] = a.flags.level_code;
  out["float_bits"] = a.flags.float_bits;
  const auto est = m.estimate();
  out["mean_bits"] = est.mean;
  out["stderr_bits"] = est.stderr;
  out["min_bits"] = *std::min_element(bits.begin(), bits.end());
  out["max_bits"] = *std::max_element(bits.begin(), bits.end());
  out["bits_per_coordinate"] = est.mean / static_cast<double>(a.d);
  out["mean_nnz"] = mn.estimate().mean;
  out["roundtrip_ok"] = all_ok;
  // The code-length bound covers a single L2-normalized bucket with levels (0, 2^-s, ..., 1).
  Json nq = nullptr;
  if (scheme.kind == SchemeKind::nuq && a.flags.bucket == 0 && L.exponential_base() == 0.5) {
    try {
      nq = bounds::code_length_bound(static_cast<int>(s), static_cast<double>(a.d), a.flags.float_bits);
      out["n_q_precondition_error"] = nullptr;
    } catch (const PreconditionError& e) {
      out["n_q_precondition_error"] = e.what();
    }
  }
  out["n_q"] = nq;
  if (book) {
    Json lengths = Json::array();
    for (std::uint32_t k = 1; k <= s + 1; ++k) lengths.push_back(book->length(k));
    out["huffman"] = Json{{"sample_gradients", a.huffman_sample},
                          {"code_lengths", lengths},
                          {"mean_bits", mh.estimate().mean},
                          {"stderr_bits", mh.estimate().stderr}};
  }
  if (a.timing) {
    out["timing"] = Json{{"seconds", elapsed}, {"threads", a.threads}, {"kernels", kernels::active().name}};
  }
  emit(a.output, dump(out));
  return all_ok ? kOk : kNumerical;
}

// --- bounds ----------------------------------------------------------------------

struct BoundsArgs {
  int s = 0;
  double d = 0;
  int b = 32;
  std::string levels, output;
  bool sweep = false;
  std::string s_values = "1,2,3,4";
  std::string d_log_range = "8:20";
  int threads = 1;
};

std::pair<int, int> parse_range(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("--d-log-range must be LO:HI");
  const auto lo = cli::parse_int_list(spec.substr(0, colon), "--d-log-range");
  const auto hi = cli::parse_int_list(spec.substr(colon + 1), "--d-log-range");
  if (lo.size() != 1 || hi.size() != 1 || lo[0] > hi[0] || hi[0] > 60) {
    throw UsageError("--d-log-range must be LO:HI with LO <= HI <= 60");
  }
  return {lo[0], hi[0]};
}

int cmd_bounds(const BoundsArgs& a) {
  if (a.sweep) {
    const auto ss = cli::parse_int_list(a.s_values, "--s-values");
    const auto [lo, hi] = parse_range(a.d_log_range);
    std::ostringstream os;
    os.precision(17);
    os << "# format_version=" << kFormatVersion << "\n# command=bounds --sweep\n";
    os << "s,d,eps_q,qsgd_eps,ratio,dense_regime,dominates\n";
    for (int s : ss) {
      if (s < 1) throw UsageError("--s-values entries must be >= 1");
      for (int k = lo; k <= hi; ++k) {
        const double d = std::ldexp(1.0, k);
        const double e = bounds::epsilon_q(s, d);
        const double q = bounds::qsgd_bounds(s, d, a.b).eps;
        const bool dense = d >= std::ldexp(1.0, 2 * s + 1);
        os << s << ',' << d << ',' << e << ',' << q << ',' << e / q << ',' << dense << ','
           << (e < q) << '\n';
      }
    }
    emit(a.output, os.str());
    return kOk;
  }
  if (a.s < 1 || !(a.d >= 1)) throw UsageError("--s and --d are required (s >= 1, d >= 1)");
  const auto r = bounds::bound_report(a.s, a.d, a.b);
  Json out;
  out["format_version"] = kFormatVersion;
  out["command"] = "bounds";
  out["s"] = a.s;
  out["d"] = a.d;
  out["b"] = a.b;
  out["eps_q"] = r.eps_q;
  out["eps_q_hat"] = optional_number(r.eps_q_hat);
  out["n_q"] = optional_number(r.n_q);
  if (!r.n_q) {
    try {
      bounds::code_length_bound(a.s, a.d, a.b);
    } catch (const PreconditionError& e) {
      out["n_q_precondition_error"] = e.what();
      std::cerr << "nuq bounds: " << e.what() << "\n";
    }
  }
  out["expected_nonzeros_bound"] = bounds::expected_nonzeros_bound(a.s, a.d);
  out["qsgd_eps"] = r.qsgd_eps;
  out["qsgd_n"] = r.qsgd_n;
  if (r.n_q) {
    const auto c = bounds::bits_comparison(a.s, a.d, a.b);
    out["bits_comparison"] = Json{{"nuq_product", c.nuq_product},
                                  {"qsgd_product", c.qsgd_product},
                                  {"ratio", c.ratio}};
  }
  if (!a.levels.empty()) {
    const LevelSequence L = cli::parse_levels(a.levels);
    Json w;
    w["levels"] = levels_json(L);
    if (a.d >= 1.0 / (L[1] * L[1])) {
      w["eps_q_hat_exact"] = L.s() == static_cast<std::size_t>(a.s)
                                 ? Json(bounds::epsilon_q_hat_exact(a.s, a.d, L))
                                 : Json(nullptr);
    }
    const auto lp = bounds::lp_bound(L, a.d);
    const auto qp = bounds::qcqp_bound(L, a.d);
    w["eps_lp"] = lp.value;
    w["eps_qp"] = qp.value;
    w["qp_converged"] = qp.converged;
    Json occ = Json::array();
    for (double x : qp.occupancies) occ.push_back(x);
    w["qp_occupancies"] = occ;
    out["worst_case"] = w;
  }
  emit(a.output, dump(out));
  return kOk;
}

// --- optimal-p -------------------------------------------------------------------

struct OptimalPArgs {
  std::string s = "2", d = "1024", p_values, output;
  int threads = 1;
};

int cmd_optimal_p(const OptimalPArgs& a) {
  const auto ss = cli::parse_int_list(a.s, "--s");
  const auto ds = cli::parse_double_list(a.d, "--d");
  for (int s : ss) {
    if (s < 1) throw UsageError("--s entries must be >= 1");
  }
  for (double d : ds) {
    if (!(d >= 2.0)) throw UsageError("--d entries must be >= 2");
  }
  std::ostringstream os;
  os.precision(17);
  os << "# format_version=" << kFormatVersion << "\n# command=optimal-p\n";
  if (!a.p_values.empty()) {
    const auto ps = cli::parse_double_list(a.p_values, "--p-values");
    for (double p : ps) {
      if (!(p > 0.0 && p < 1.0)) throw UsageError("--p-values entries must lie in (0, 1)");
    }
    bounds::write_sweep_csv(os, bounds::sweep(ss, ds, ps, a.threads, {}));
    emit(a.output, os.str());
    return kOk;
  }
  std::vector<std::pair<int, double>> cases;
  for (int s : ss) {
    for (double d : ds) cases.emplace_back(s, d);
  }
  std::vector<bounds::OptimalP> results(cases.size());
  parallel_for(cases.size(), a.threads, [&](std::size_t i) {
    results[i] = bounds::optimal_p(cases[i].first, cases[i].second);
  });
  os << "s,d,p_star,eps_qp,grid_p,grid_eps,converged\n";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& r = results[i];
    os << cases[i].first << ',' << cases[i].second << ',' << r.p << ',' << r.eps_qp << ','
       << r.grid_p << ',' << r.grid_eps << ',' << r.converged << '\n';
  }
  emit(a.output, os.str());
  return kOk;
}

// --- variance --------------------------------------------------------------------

struct VarianceArgs {
  std::string input, seed, output, s_values = "1,2,3,4";
  SchemeFlags flags;
  std::size_t n = 100000, corpus = 0, d = 64;
  int threads = 1;
};

int cmd_variance(const VarianceArgs& a) {
  const std::uint64_t seed = parse_seed(a.seed);
  if (a.n < lab::kMinSamples) {
    throw UsageError("--n must be >= " + std::to_string(lab::kMinSamples));
  }
  if (a.corpus > 0) {
    if (!a.input.empty()) throw UsageError("--corpus and --input are exclusive");
    const auto ss = cli::parse_int_list(a.s_values, "--s-values");
    std::vector<lab::VarianceRow> rows;
    for (std::size_t k = 0; k < a.corpus; ++k) {
      const auto v = cli::load_input("gaussian:" + std::to_string(a.d),
                                     RandomSource(seed).substream(k).stream());
      for (auto kind : {SchemeKind::nuq, SchemeKind::qsgd_l2, SchemeKind::qsgd_inf}) {
        for (int s : ss) {
          if (s < 1) throw UsageError("--s-values entries must be >= 1");
          const Scheme scheme = Scheme::make(kind, s);
          const auto est = lab::mc_variance(v.values, scheme, a.n,
                                            RandomSource(seed).substream(k).substream(s).stream(),
                                            a.threads);
          rows.push_back({k, std::string(scheme_name(kind)), s,
                          closed_form_variance(v.values, scheme.levels, scheme.normalization()),
                          est.mean, est.stderr});
        }
      }
    }
    std::ostringstream os;
    os << "# format_version=" << kFormatVersion << "\n# command=variance --corpus\n";
    lab::write_variance_csv(os, rows);
    emit(a.output, os.str());
    return kOk;
  }
  if (a.input.empty()) throw UsageError("--input or --corpus is required");
  const Scheme scheme = resolve_scheme(a.flags.scheme, a.flags.levels);
  if (!scheme.quantizes()) throw UsageError("variance needs a quantizing scheme");
  const auto in = cli::load_input(a.input, seed);
  const auto& v = in.values;
  const auto est = lab::mc_variance(v, scheme, a.n, seed, a.threads);
  const double closed = closed_form_variance(v, scheme.levels, scheme.normalization());
  const double sq = kernels::sum_squares(v);

  Json out;
  out["format_version"] = kFormatVersion;
  out["command"] = "variance";
  out["input"] = in.descriptor;
  out["seed"] = seed;
  out["scheme"] = scheme_name(scheme.kind);
  out["levels"] = levels_json(scheme.levels);
  out["samples"] = est.samples;
  out["closed_form_variance"] = closed;
  out["mc_variance"] = est.mean;
  out["mc_stderr"] = est.stderr;
  out["z_score"] = est.stderr > 0 ? Json((est.mean - closed) / est.stderr) : Json(nullptr);
  out["input_sq_norm"] = sq;
  out["relative_variance"] = sq > 0 ? Json(closed / sq) : Json(nullptr);
  const double d = static_cast<double>(v.size());
  const bool exponential_half = scheme.kind == SchemeKind::nuq && scheme.levels.exponential_base() == 0.5;
  out["eps_q"] = exponential_half ? Json(bounds::epsilon_q(static_cast<int>(scheme.levels.s()), d))
                                  : Json(nullptr);
  emit(a.output, dump(out));
  return kOk;
}

// --- separate --------------------------------------------------------------------

struct SeparateArgs {
  std::size_t d = 0;
  double K1 = 0, K2 = 0;
  int s = 0;
  std::string output;
};

int cmd_separate(const SeparateArgs& a) {
  const bool manual = a.d != 0 || a.K1 != 0 || a.K2 != 0 || a.s != 0;
  if (manual && (a.d == 0 || a.K1 == 0 || a.K2 == 0 || a.s == 0)) {
    throw UsageError("give all of --d --K1 --K2 --s, or none to search");
  }
  const lab::SeparationInputs in = manual ? lab::SeparationInputs{a.d, a.K1, a.K2, a.s}
                                          : lab::find_separation();
  const auto check = lab::check_separation(in);
  const auto r = lab::separation_vector(in);
  Json out;
  out["format_version"] = kFormatVersion;
  out["command"] = "separate";
  out["searched"] = !manual;
  out["d"] = in.d;
  out["K1"] = in.K1;
  out["K2"] = in.K2;
  out["s"] = in.s;
  out["condition1"] = Json{{"lhs", check.cond1_lhs}, {"rhs", check.cond1_rhs}, {"holds", check.cond1}};
  out["condition2"] = Json{{"lhs", check.cond2_lhs}, {"rhs", check.cond2_rhs}, {"holds", check.cond2}};
  out["var_nuq"] = r.var_nuq;
  out["var_qinf"] = r.var_qinf;
  out["var_qinf_gap_1_over_s_plus_1"] = r.var_qinf_alt;
  out["separated"] = r.separated();
  out["separated_gap_1_over_s_plus_1"] = r.separated_alt();
  emit(a.output, dump(out));
  return kOk;
}

// --- simulate --------------------------------------------------------------------

struct SimulateArgs {
  std::string problem = "least_squares", seed, output, schedule = "constant", topology;
  SchemeFlags flags;
  std::size_t d = 16, K = 1, T = 100, batch = 0;
  std::optional<double> alpha, momentum;
  int mode = 0;
  std::optional<std::size_t> async_tau;
  double radius = 0;
  int threads = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  const std::uint64_t seed = parse_seed(a.seed);
  const int variants = (a.momentum ? 1 : 0) + (a.async_tau ? 1 : 0) + (a.topology.empty() ? 0 : 1);
  if (variants > 1) throw UsageError("--momentum, --async and --topology are exclusive");
  const auto problem = sim::built_in_problem(a.problem, a.d, seed);

  sim::SimConfig c;
  c.K = a.K;
  c.T = a.T;
  // Default step: 1/smoothness of the oracle in use, shrunk by (1 - rho)/12 on a topology.
  const double beta = a.batch == 0 ? problem->smoothness() : problem->row_smoothness();
  c.alpha = 1.0 / beta;
  if (a.schedule == "constant") {
    c.schedule = sim::Schedule::constant;
  } else if (a.schedule == "inv_sqrt") {
    c.schedule = sim::Schedule::inv_sqrt;
  } else {
    throw UsageError("--schedule must be constant or inv_sqrt");
  }
  c.scheme = resolve_scheme(a.flags.scheme, a.flags.levels);
  c.bucket = a.flags.bucket;
  c.codec = a.flags.codec();
  c.seed = seed;
  c.batch = a.batch;
  c.mu = a.momentum.value_or(0.0);
  c.mode = a.mode;
  c.tau_max = a.async_tau.value_or(0);
  c.radius = a.radius;
  c.threads = a.threads;

  if (a.alpha) c.alpha = *a.alpha;
  std::string variant = "data_parallel";
  sim::SimTrace trace;
  if (a.momentum) {
    variant = "momentum";
    trace = sim::run_momentum(*problem, c);
  } else if (a.async_tau) {
    variant = "async";
    trace = sim::run_async(*problem, c);
  } else if (!a.topology.empty()) {
    if (a.topology == "ring") {
      c.W = sim::ring_topology(c.K);
    } else if (a.topology == "complete") {
      c.W = sim::complete_topology(c.K);
    } else {
      throw UsageError("--topology must be ring or complete");
    }
    if (!a.alpha) c.alpha *= (1.0 - sim::validate_topology(c.W, c.K)) / 12.0;
    variant = "ecd_psgd_" + a.topology;
    trace = sim::run_ecd_psgd(*problem, c);
  } else {
    trace = sim::run_data_parallel(*problem, c);
  }

  std::ostringstream meta;
  meta.precision(17);
  std::vector<std::string> comments;
  comments.push_back("format_version=" + std::to_string(kFormatVersion));
  comments.push_back("command=simulate variant=" + variant);
  comments.push_back("problem=" + problem->descriptor());
  meta << "f_star=";
  if (problem->min_value()) {
    meta << *problem->min_value();
  } else {
    meta << "unknown";
  }
  meta << " smoothness=" << problem->smoothness() << " alpha=" << c.alpha;
  comments.push_back(meta.str());
  comments.push_back("scheme=" + std::string(scheme_name(c.scheme.kind)) + " K=" +
                     std::to_string(c.K) + " T=" + std::to_string(c.T) +
                     " batch=" + std::to_string(c.batch) + " seed=" + std::to_string(seed));
  comments.push_back("total_bits=" + std::to_string(trace.total_bits) +
                     " messages=" + std::to_string(trace.messages) +
                     " replicas_consistent=" + (trace.replicas_consistent ? "1" : "0"));
  std::ostringstream os;
  sim::write_trace_csv(os, trace, !a.topology.empty(), comments);
  emit(a.output, os.str());
  return trace.replicas_consistent ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nuq: nonuniform gradient quantization toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.footer("Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 precondition violation.");

  auto add_output = [](CLI::App* sub, std::string& out) {
    sub->add_option("-o,--output", out, "output path (default stdout)");
  };
  auto add_seed = [](CLI::App* sub, std::string& seed) {
    sub->add_option("--seed", seed, "random seed (required)")->required();
  };
  auto add_threads = [](CLI::App* sub, int& threads) {
    sub->add_option("--threads", threads, "worker threads; results do not depend on this")
        ->check(CLI::Range(1, 1024))
        ->capture_default_str();
  };

  QuantizeArgs qa;
  auto* q = app.add_subcommand("quantize", "Quantize one vector and report its encoding");
  q->add_option("--input", qa.input, "vector file or generator gaussian:d | sparse:d:k")->required();
  qa.flags.add(q);
  add_seed(q, qa.seed);
  q->add_option("--stream-out", qa.stream_out, "also write the encoded stream file");
  add_output(q, qa.output);

  CodecBenchArgs ca;
  auto* cb = app.add_subcommand("codec-bench", "Encode/decode Gaussian gradients and measure bits");
  cb->add_option("--d", ca.d, "dimension")->capture_default_str();
  cb->add_option("--count", ca.count, "number of gradients")->capture_default_str();
  cb->add_option("--huffman-sample", ca.huffman_sample,
                 "gradients used to learn a Huffman level codebook (0 = off)")
      ->capture_default_str();
  ca.flags.add(cb);
  add_seed(cb, ca.seed);
  add_threads(cb, ca.threads);
  cb->add_flag("--timing", ca.timing, "include wall-clock timing (not reproducible)");
  add_output(cb, ca.output);

  BoundsArgs ba;
  auto* bo = app.add_subcommand("bounds", "Variance and code-length bounds");
  bo->add_option("--s", ba.s, "number of internal levels");
  bo->add_option("--d", ba.d, "dimension");
  bo->add_option("--b", ba.b, "bits per norm")->capture_default_str();
  bo->add_option("--levels", ba.levels, "also solve the LP/QCQP worst case for P,S or uniform,S");
  bo->add_flag("--sweep", ba.sweep, "CSV of eps_q vs the uniform-level bound over a grid");
  bo->add_option("--s-values", ba.s_values, "sweep s list")->capture_default_str();
  bo->add_option("--d-log-range", ba.d_log_range, "sweep d = 2^LO .. 2^HI")->capture_default_str();
  add_output(bo, ba.output);

  OptimalPArgs oa;
  auto* op = app.add_subcommand("optimal-p", "Exponential base minimizing the QCQP bound");
  op->add_option("--s", oa.s, "comma-separated s values")->capture_default_str();
  op->add_option("--d", oa.d, "comma-separated dimensions")->capture_default_str();
  op->add_option("--p-values", oa.p_values,
                 "instead of optimizing, tabulate eps_q, eps_lp, eps_qp at these p");
  add_threads(op, oa.threads);
  add_output(op, oa.output);

  VarianceArgs va;
  auto* var = app.add_subcommand("variance", "Monte Carlo vs closed-form quantization variance");
  var->add_option("--input", va.input, "vector file or generator");
  va.flags.add(var);
  var->add_option("--n", va.n, "Monte Carlo draws")->capture_default_str();
  var->add_option("--corpus", va.corpus, "CSV over this many gaussian:d vectors and all schemes");
  var->add_option("--d", va.d, "corpus dimension")->capture_default_str();
  var->add_option("--s-values", va.s_values, "corpus s list")->capture_default_str();
  add_seed(var, va.seed);
  add_threads(var, va.threads);
  add_output(var, va.output);

  SeparateArgs sa;
  auto* se = app.add_subcommand("separate", "Vector where nonuniform levels beat max-norm uniform levels");
  se->add_option("--d", sa.d, "dimension (omit all four to search)");
  se->add_option("--K1", sa.K1, "spread constant K1");
  se->add_option("--K2", sa.K2, "constant K2 < K1");
  se->add_option("--s", sa.s, "internal levels");
  add_output(se, sa.output);

  SimulateArgs ma;
  auto* sm = app.add_subcommand("simulate", "Deterministic multi-worker SGD; trace CSV");
  sm->add_option("--problem", ma.problem,
                 "least_squares | least_squares_consistent | logistic | smooth_nonconvex")
      ->capture_default_str();
  sm->add_option("--d", ma.d, "problem dimension")->capture_default_str();
  ma.flags.add(sm);
  sm->add_option("--K", ma.K, "workers")->capture_default_str();
  sm->add_option("--T", ma.T, "iterations")->capture_default_str();
  sm->add_option("--alpha", ma.alpha, "step size (default 1/smoothness of the gradient oracle)");
  sm->add_option("--schedule", ma.schedule, "constant | inv_sqrt")->capture_default_str();
  sm->add_option("--batch", ma.batch, "rows per stochastic gradient, 0 = exact gradient")
      ->capture_default_str();
  sm->add_option("--momentum", ma.momentum, "momentum mu in [0, 1)");
  sm->add_option("--mode", ma.mode, "momentum: 0 heavy ball, 1 Nesterov")->capture_default_str();
  sm->add_option("--async", ma.async_tau, "bounded-delay asynchronous run with this tau_max");
  sm->add_option("--topology", ma.topology, "decentralized run: ring | complete");
  sm->add_option("--radius", ma.radius, "project onto the L2 ball of this radius (0 = off)");
  add_seed(sm, ma.seed);
  add_threads(sm, ma.threads);
  add_output(sm, ma.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*q) return cmd_quantize(qa);
    if (*cb) return cmd_codec_bench(ca);
    if (*bo) return cmd_bounds(ba);
    if (*op) return cmd_optimal_p(oa);
    if (*var) return cmd_variance(va);
    if (*se) return cmd_separate(sa);
    if (*sm) return cmd_simulate(ma);
  } catch (const UsageError& e) {
    std::cerr << "nuq: usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "nuq: precondition violated: " << e.what() << "\n";
    return kPrecondition;
  } catch (const NumericalError& e) {
    std::cerr << "nuq: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DecodeError& e) {
    std::cerr << "nuq: decode failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
