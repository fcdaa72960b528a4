#pragma once

// Wire format of one quantized gradient (one bucket):
//
//   norm        b bits, IEEE-754 binary32/binary64 bit pattern, MSB first
//   ERC(nnz+1)  entry count header
//   nnz times:  ERC(gap)  gap = index - previous index, previous starts at -1
//               sign      1 bit, 1 = positive
//               level     ERC(level code) or a Huffman codeword
//
// ERC is Elias recursive (omega) coding of positive integers. Bucketed
// gradients are the concatenation of their buckets' encodings.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nuq/bitstream.hpp"
#include "nuq/levels.hpp"
#include "nuq/quantizer.hpp"

namespace nuq {

enum class LevelCode {
  /// ERC(log2(2^{s+1} l_k)); only defined when internal levels are powers of 1/2.
  log_power_of_two,
  /// ERC(k) for level index k; works for any level sequence.
  level_index,
};

struct CodecConfig {
  int float_bits = 32;  // 32 or 64
  LevelCode level_code = LevelCode::level_index;
};

void erc_append(BitWriter& out, std::uint64_t n);
BitStream erc_encode(std::uint64_t n);
std::uint64_t erc_read(BitReader& in);

struct ErcDecoded {
  std::uint64_t value = 0;
  std::size_t consumed = 0;
};
ErcDecoded erc_decode(const BitStream& stream, std::size_t offset = 0);

/// Level code value transmitted for level index k under `mode`.
std::uint64_t level_code_value(std::uint32_t level, const LevelSequence& levels,
                               LevelCode mode);

BitStream encode_gradient(const QuantizedVector& q, const LevelSequence& levels,
                          const CodecConfig& cfg = {});
void encode_gradient(BitWriter& out, const QuantizedVector& q, const LevelSequence& levels,
                     const CodecConfig& cfg = {});

/// Decodes exactly one gradient spanning the whole stream.
QuantizedVector decode_gradient(const BitStream& stream, std::size_t dimension,
                                const LevelSequence& levels, const CodecConfig& cfg = {});
QuantizedVector decode_gradient(BitReader& in, std::size_t dimension,
                                const LevelSequence& levels, const CodecConfig& cfg = {});

BitStream encode_buckets(std::span<const QuantizedVector> buckets,
                         const LevelSequence& levels, const CodecConfig& cfg = {});
std::vector<QuantizedVector> decode_buckets(const BitStream& stream, std::size_t dimension,
                                            BucketSpec bucket, const LevelSequence& levels,
                                            const CodecConfig& cfg = {});

inline std::size_t measured_bits(const BitStream& stream) noexcept {
  return stream.bit_length();
}

/// Prefix code for level indices 1..s+1 learned from a sample histogram.
/// Counts are smoothed by +1 so unseen levels stay encodable. Codes are
/// canonical: ties are broken by symbol, so the book depends only on counts.
class HuffmanCodebook {
 public:
  std::size_t symbols() const noexcept { return lengths_.size(); }
  /// Code length / code for level index k in 1..s+1.
  unsigned length(std::uint32_t level) const;
  std::uint64_t code(std::uint32_t level) const;

  void write(BitWriter& out, std::uint32_t level) const;
  std::uint32_t read(BitReader& in) const;

  friend HuffmanCodebook huffman_from_sample(std::span<const std::uint32_t> samples,
                                             std::size_t s);

 private:
  std::vector<unsigned> lengths_;     // index k-1
  std::vector<std::uint64_t> codes_;  // index k-1
};

HuffmanCodebook huffman_from_sample(std::span<const std::uint32_t> samples, std::size_t s);

/// Same layout as encode_gradient with the level field replaced by the codebook.
BitStream huffman_encode(const QuantizedVector& q, const LevelSequence& levels,
                         const HuffmanCodebook& book, const CodecConfig& cfg = {});
void huffman_encode(BitWriter& out, const QuantizedVector& q, const LevelSequence& levels,
                    const HuffmanCodebook& book, const CodecConfig& cfg = {});
QuantizedVector huffman_decode(const BitStream& stream, std::size_t dimension,
                               const LevelSequence& levels, const HuffmanCodebook& book,
                               const CodecConfig& cfg = {});
QuantizedVector huffman_decode(BitReader& in, std::size_t dimension,
                               const LevelSequence& levels, const HuffmanCodebook& book,
                               const CodecConfig& cfg = {});

/// Persisted stream: 1 format-version byte, 8-byte big-endian bit length, payload.
inline constexpr std::uint8_t kStreamFormatVersion = 1;
std::vector<std::uint8_t> serialize_stream(const BitStream& stream);
BitStream parse_stream(std::span<const std::uint8_t> file);

}  // namespace nuq
