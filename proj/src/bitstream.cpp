#include "nuq/bitstream.hpp"

#include "nuq/error.hpp"

namespace nuq {

BitStream::BitStream(std::vector<std::uint8_t> bytes, std::size_t bit_length)
    : bytes_(std::move(bytes)), bit_length_(bit_length) {
  if (bytes_.size() != (bit_length_ + 7) / 8) {
    throw PreconditionError("byte count does not match bit length");
  }
  if (bit_length_ % 8 != 0) {
    const unsigned used = bit_length_ % 8;
    const auto padding = static_cast<std::uint8_t>(0xFFu >> used);
    if (bytes_.back() & padding) throw PreconditionError("nonzero padding bits");
  }
}

bool BitStream::bit(std::size_t pos) const {
  if (pos >= bit_length_) throw DecodeError("bit position past end of stream");
  return (bytes_[pos >> 3] >> (7 - (pos & 7))) & 1u;
}

std::string BitStream::to_string() const {
  std::string out;
  out.reserve(bit_length_);
  for (std::size_t i = 0; i < bit_length_; ++i) out.push_back(bit(i) ? '1' : '0');
  return out;
}

BitStream BitStream::from_string(std::string_view bits) {
  BitWriter w;
  for (char c : bits) {
    if (c != '0' && c != '1') throw PreconditionError("bit string must be 0/1");
    w.put_bit(c == '1');
  }
  return std::move(w).finish();
}

void BitWriter::put_bit(bool b) {
  auto& s = stream_;
  if (s.bit_length_ % 8 == 0) s.bytes_.push_back(0);
  if (b) s.bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (s.bit_length_ % 8));
  ++s.bit_length_;
}

void BitWriter::put_bits(std::uint64_t value, unsigned count) {
  for (unsigned k = count; k > 0; --k) put_bit((value >> (k - 1)) & 1u);
}

void BitWriter::append(const BitStream& other) {
  for (std::size_t i = 0; i < other.bit_length(); ++i) put_bit(other.bit(i));
}

BitReader::BitReader(const BitStream& stream, std::size_t offset)
    : stream_(&stream), pos_(offset) {
  if (offset > stream.bit_length()) throw DecodeError("offset past end of stream");
}

bool BitReader::get_bit() {
  if (pos_ >= stream_->bit_length()) throw DecodeError("truncated stream");
  return stream_->bit(pos_++);
}

std::uint64_t BitReader::get_bits(unsigned count) {
  if (count > 64) throw DecodeError("field wider than 64 bits");
  if (remaining() < count) throw DecodeError("truncated stream");
  std::uint64_t v = 0;
  for (unsigned k = 0; k < count; ++k) v = (v << 1) | (stream_->bit(pos_++) ? 1u : 0u);
  return v;
}

bool BitReader::peek_bit() const {
  if (pos_ >= stream_->bit_length()) throw DecodeError("truncated stream");
  return stream_->bit(pos_);
}

}  // namespace nuq
