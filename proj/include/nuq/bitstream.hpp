#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nuq {

/// MSB-first bit sequence with an exact length. Bits past bit_length() in the
/// final byte are zero and never read.
class BitStream {
 public:
  BitStream() = default;
  /// Throws PreconditionError if the byte count does not match bit_length or
  /// any padding bit is set.
  BitStream(std::vector<std::uint8_t> bytes, std::size_t bit_length);

  std::size_t bit_length() const noexcept { return bit_length_; }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  bool bit(std::size_t pos) const;

  /// "0101..." rendering, handy in tests and diagnostics.
  std::string to_string() const;
  static BitStream from_string(std::string_view bits);

  friend bool operator==(const BitStream&, const BitStream&) = default;

 private:
  friend class BitWriter;
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_length_ = 0;
};

class BitWriter {
 public:
  void put_bit(bool b);
  /// Low `count` bits of `value`, most significant first. count <= 64.
  void put_bits(std::uint64_t value, unsigned count);
  void append(const BitStream& other);

  std::size_t bit_length() const noexcept { return stream_.bit_length_; }
  BitStream finish() && { return std::move(stream_); }
  const BitStream& view() const noexcept { return stream_; }

 private:
  BitStream stream_;
};

/// Bounds-checked reader; reading past bit_length throws DecodeError.
class BitReader {
 public:
  explicit BitReader(const BitStream& stream, std::size_t offset = 0);

  bool get_bit();
  std::uint64_t get_bits(unsigned count);
  bool peek_bit() const;

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return stream_->bit_length() - pos_; }

 private:
  const BitStream* stream_;
  std::size_t pos_;
};

}  // namespace nuq
