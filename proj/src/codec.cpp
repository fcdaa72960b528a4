#include "nuq/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <queue>
#include <string>
#include <tuple>

#include "nuq/error.hpp"

namespace nuq {

namespace {

unsigned bit_width(std::uint64_t n) noexcept { return static_cast<unsigned>(std::bit_width(n)); }

void check_float_bits(const CodecConfig& cfg) {
  if (cfg.float_bits != 32 && cfg.float_bits != 64) {
    throw PreconditionError("float_bits must be 32 or 64");
  }
}

void write_norm(BitWriter& out, double norm, int float_bits) {
  if (float_bits == 32) {
    out.put_bits(std::bit_cast<std::uint32_t>(static_cast<float>(norm)), 32);
  } else {
    out.put_bits(std::bit_cast<std::uint64_t>(norm), 64);
  }
}

double read_norm(BitReader& in, int float_bits) {
  const double norm =
      float_bits == 32
          ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(in.get_bits(32))))
          : std::bit_cast<double>(in.get_bits(64));
  if (!std::isfinite(norm) || norm < 0.0 || std::signbit(norm)) {
    throw DecodeError("decoded norm is negative or not finite");
  }
  return norm;
}

template <class WriteLevel>
void encode_with(BitWriter& out, const QuantizedVector& q, const LevelSequence& levels,
                 const CodecConfig& cfg, WriteLevel&& write_level) {
  check_float_bits(cfg);
  validate(q, levels);
  write_norm(out, q.norm, cfg.float_bits);
  erc_append(out, q.entries.size() + 1);
  std::size_t next = 0;  // index of previous entry + 1
  for (const auto& e : q.entries) {
    erc_append(out, e.index + 1 - next);
    out.put_bit(e.sign > 0);
    write_level(e.level);
    next = e.index + 1;
  }
}

template <class ReadLevel>
QuantizedVector decode_with(BitReader& in, std::size_t dimension, const LevelSequence& levels,
                            const CodecConfig& cfg, ReadLevel&& read_level) {
  check_float_bits(cfg);
  QuantizedVector q;
  q.dimension = dimension;
  q.norm = read_norm(in, cfg.float_bits);
  const std::uint64_t count = erc_read(in) - 1;
  if (count > dimension) throw DecodeError("entry count exceeds dimension");
  if (q.norm == 0.0 && count != 0) throw DecodeError("zero norm with nonzero entries");
  q.entries.reserve(count);
  const std::uint32_t top = static_cast<std::uint32_t>(levels.s() + 1);
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t gap = erc_read(in);
    if (gap > dimension - next) {
      throw DecodeError("index overflow past dimension " + std::to_string(dimension));
    }
    QuantizedEntry e;
    e.index = next + gap - 1;
    e.sign = in.get_bit() ? 1 : -1;
    e.level = read_level();
    if (e.level < 1 || e.level > top) {
      throw DecodeError("level code out of range: " + std::to_string(e.level));
    }
    q.entries.push_back(e);
    next = e.index + 1;
  }
  return q;
}

void require_consumed(const BitReader& in) {
  if (in.remaining() != 0) throw DecodeError("trailing bits after gradient");
}

}  // namespace

void erc_append(BitWriter& out, std::uint64_t n) {
  if (n < 1) throw PreconditionError("ERC encodes positive integers only");
  // Groups are produced outermost first and emitted innermost first.
  std::uint64_t groups[8];
  int count = 0;
  while (n > 1) {
    groups[count++] = n;
    n = bit_width(n) - 1;
  }
  for (int k = count - 1; k >= 0; --k) out.put_bits(groups[k], bit_width(groups[k]));
  out.put_bit(false);
}

BitStream erc_encode(std::uint64_t n) {
  BitWriter w;
  erc_append(w, n);
  return std::move(w).finish();
}

std::uint64_t erc_read(BitReader& in) {
  std::uint64_t n = 1;
  while (in.peek_bit()) {
    if (n >= 64) throw DecodeError("ERC group wider than 64 bits");
    n = in.get_bits(static_cast<unsigned>(n) + 1);
  }
  in.get_bit();
  return n;
}

ErcDecoded erc_decode(const BitStream& stream, std::size_t offset) {
  BitReader in(stream, offset);
  const std::uint64_t value = erc_read(in);
  return {value, in.position() - offset};
}

std::uint64_t level_code_value(std::uint32_t level, const LevelSequence& levels,
                               LevelCode mode) {
  if (mode == LevelCode::level_index) return level;
  if (!levels.powers_of_half()) {
    throw PreconditionError("power-of-two level code needs levels that are powers of 1/2");
  }
  const double scaled = std::ldexp(levels[level], static_cast<int>(levels.s()) + 1);
  const double code = std::log2(scaled);
  if (code < 1.0 || code != std::floor(code)) {
    throw PreconditionError("level " + std::to_string(level) +
                            " has no positive integral power-of-two code");
  }
  return static_cast<std::uint64_t>(code);
}

void encode_gradient(BitWriter& out, const QuantizedVector& q, const LevelSequence& levels,
                     const CodecConfig& cfg) {
  if (cfg.level_code == LevelCode::level_index) {
    encode_with(out, q, levels, cfg, [&](std::uint32_t k) { erc_append(out, k); });
    return;
  }
  // Resolve every level's code up front so unsuitable levels fail even for q = 0.
  std::vector<std::uint64_t> table(levels.s() + 2, 0);
  for (std::uint32_t k = 1; k <= levels.s() + 1; ++k) {
    table[k] = level_code_value(k, levels, cfg.level_code);
  }
  encode_with(out, q, levels, cfg, [&](std::uint32_t k) { erc_append(out, table[k]); });
}

BitStream encode_gradient(const QuantizedVector& q, const LevelSequence& levels,
                          const CodecConfig& cfg) {
  BitWriter w;
  encode_gradient(w, q, levels, cfg);
  return std::move(w).finish();
}

QuantizedVector decode_gradient(BitReader& in, std::size_t dimension,
                                const LevelSequence& levels, const CodecConfig& cfg) {
  if (cfg.level_code == LevelCode::level_index) {
    return decode_with(in, dimension, levels, cfg, [&] {
      const std::uint64_t k = erc_read(in);
      return static_cast<std::uint32_t>(std::min<std::uint64_t>(k, UINT32_MAX));
    });
  }
  // Inverse table: code value -> level index.
  std::vector<std::pair<std::uint64_t, std::uint32_t>> inverse;
  for (std::uint32_t k = 1; k <= levels.s() + 1; ++k) {
    inverse.emplace_back(level_code_value(k, levels, cfg.level_code), k);
  }
  return decode_with(in, dimension, levels, cfg, [&]() -> std::uint32_t {
    const std::uint64_t code = erc_read(in);
    for (const auto& [value, k] : inverse) {
      if (value == code) return k;
    }
    return 0;  // rejected by the range check
  });
}

QuantizedVector decode_gradient(const BitStream& stream, std::size_t dimension,
                                const LevelSequence& levels, const CodecConfig& cfg) {
  BitReader in(stream);
  auto q = decode_gradient(in, dimension, levels, cfg);
  require_consumed(in);
  return q;
}

BitStream encode_buckets(std::span<const QuantizedVector> buckets, const LevelSequence& levels,
                         const CodecConfig& cfg) {
  BitWriter w;
  for (const auto& b : buckets) encode_gradient(w, b, levels, cfg);
  return std::move(w).finish();
}

std::vector<QuantizedVector> decode_buckets(const BitStream& stream, std::size_t dimension,
                                            BucketSpec bucket, const LevelSequence& levels,
                                            const CodecConfig& cfg) {
  const std::size_t count = bucket.bucket_count(dimension);
  BitReader in(stream);
  std::vector<QuantizedVector> out;
  out.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t len = std::min(bucket.size, dimension - b * bucket.size);
    out.push_back(decode_gradient(in, len, levels, cfg));
  }
  require_consumed(in);
  return out;
}

// --- Huffman ---------------------------------------------------------------

unsigned HuffmanCodebook::length(std::uint32_t level) const {
  if (level < 1 || level > lengths_.size()) throw PreconditionError("level outside codebook");
  return lengths_[level - 1];
}

std::uint64_t HuffmanCodebook::code(std::uint32_t level) const {
  if (level < 1 || level > codes_.size()) throw PreconditionError("level outside codebook");
  return codes_[level - 1];
}

void HuffmanCodebook::write(BitWriter& out, std::uint32_t level) const {
  out.put_bits(code(level), length(level));
}

std::uint32_t HuffmanCodebook::read(BitReader& in) const {
  std::uint64_t value = 0;
  unsigned len = 0;
  const unsigned max_len = *std::max_element(lengths_.begin(), lengths_.end());
  while (len < max_len) {
    value = (value << 1) | (in.get_bit() ? 1u : 0u);
    ++len;
    for (std::size_t k = 0; k < lengths_.size(); ++k) {
      if (lengths_[k] == len && codes_[k] == value) return static_cast<std::uint32_t>(k + 1);
    }
  }
  throw DecodeError("invalid Huffman codeword");
}

HuffmanCodebook huffman_from_sample(std::span<const std::uint32_t> samples, std::size_t s) {
  if (samples.empty()) throw PreconditionError("Huffman sample must be non-empty");
  if (s < 1) throw PreconditionError("need s >= 1");
  const std::size_t symbols = s + 1;
  std::vector<std::uint64_t> counts(symbols, 1);
  for (auto k : samples) {
    if (k < 1 || k > symbols) throw PreconditionError("sample level outside 1..s+1");
    ++counts[k - 1];
  }

  // Tree nodes: leaves 0..symbols-1, internal nodes appended. Ties on weight
  // break on node id so the construction is deterministic.
  std::vector<std::size_t> parent(symbols, 0);
  using Item = std::tuple<std::uint64_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t k = 0; k < symbols; ++k) heap.emplace(counts[k], k);
  std::size_t next_id = symbols;
  while (heap.size() > 1) {
    const auto [wa, a] = heap.top();
    heap.pop();
    const auto [wb, b] = heap.top();
    heap.pop();
    parent.push_back(0);
    parent[a] = next_id;
    parent[b] = next_id;
    heap.emplace(wa + wb, next_id++);
  }
  const std::size_t root = next_id - 1;

  HuffmanCodebook book;
  book.lengths_.resize(symbols);
  for (std::size_t k = 0; k < symbols; ++k) {
    unsigned depth = 0;
    for (std::size_t n = k; n != root; n = parent[n]) ++depth;
    book.lengths_[k] = depth;
  }
  if (book.lengths_[0] > 63) throw NumericalError("Huffman code too long");

  // Canonical assignment in (length, symbol) order.
  std::vector<std::size_t> order(symbols);
  for (std::size_t k = 0; k < symbols; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return book.lengths_[a] < book.lengths_[b];
  });
  book.codes_.resize(symbols);
  std::uint64_t code = 0;
  unsigned prev_len = book.lengths_[order[0]];
  for (std::size_t i = 0; i < symbols; ++i) {
    const unsigned len = book.lengths_[order[i]];
    if (i > 0) code = (code + 1) << (len - prev_len);
    book.codes_[order[i]] = code;
    prev_len = len;
  }
  return book;
}

void huffman_encode(BitWriter& out, const QuantizedVector& q, const LevelSequence& levels,
                    const HuffmanCodebook& book, const CodecConfig& cfg) {
  if (book.symbols() != levels.s() + 1) throw PreconditionError("codebook/level mismatch");
  encode_with(out, q, levels, cfg, [&](std::uint32_t k) { book.write(out, k); });
}

BitStream huffman_encode(const QuantizedVector& q, const LevelSequence& levels,
                         const HuffmanCodebook& book, const CodecConfig& cfg) {
  BitWriter w;
  huffman_encode(w, q, levels, book, cfg);
  return std::move(w).finish();
}

QuantizedVector huffman_decode(BitReader& in, std::size_t dimension,
                               const LevelSequence& levels, const HuffmanCodebook& book,
                               const CodecConfig& cfg) {
  if (book.symbols() != levels.s() + 1) throw PreconditionError("codebook/level mismatch");
  return decode_with(in, dimension, levels, cfg, [&] { return book.read(in); });
}

QuantizedVector huffman_decode(const BitStream& stream, std::size_t dimension,
                               const LevelSequence& levels, const HuffmanCodebook& book,
                               const CodecConfig& cfg) {
  BitReader in(stream);
  auto q = huffman_decode(in, dimension, levels, book, cfg);
  require_consumed(in);
  return q;
}

// --- persistence -----------------------------------------------------------

std::vector<std::uint8_t> serialize_stream(const BitStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(9 + stream.bytes().size());
  out.push_back(kStreamFormatVersion);
  const std::uint64_t len = stream.bit_length();
  for (int k = 7; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(len >> (8 * k)));
  out.insert(out.end(), stream.bytes().begin(), stream.bytes().end());
  return out;
}

BitStream parse_stream(std::span<const std::uint8_t> file) {
  if (file.size() < 9) throw DecodeError("stream file shorter than its header");
  if (file[0] != kStreamFormatVersion) {
    throw DecodeError("unsupported stream format version " + std::to_string(file[0]));
  }
  std::uint64_t len = 0;
  for (int k = 1; k <= 8; ++k) len = (len << 8) | file[k];
  std::vector<std::uint8_t> bytes(file.begin() + 9, file.end());
  if (bytes.size() != (len + 7) / 8) throw DecodeError("stream payload length mismatch");
  try {
    return BitStream(std::move(bytes), len);
  } catch (const PreconditionError& e) {
    throw DecodeError(e.what());
  }
}

}  // namespace nuq
