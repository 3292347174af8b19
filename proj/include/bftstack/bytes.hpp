#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bftstack {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(const Bytes& b) {
  return std::string(b.begin(), b.end());
}

/// FNV-1a, used for trace digests and deterministic tie-breaking. Not a MAC.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex_digest(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

/// Little-endian length-prefixed encoder for the wire formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void blob16(std::span<const std::uint8_t> b) {
    if (b.size() > 0xffff) throw std::length_error("blob16 overflow");
    u16(static_cast<std::uint16_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void blob32(std::span<const std::uint8_t> b) {
    if (b.size() > 0xffffffffull) throw std::length_error("blob32 overflow");
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return data_[need(1)]; }
  std::uint16_t u16() {
    std::size_t o = need(2);
    return static_cast<std::uint16_t>(data_[o] | (data_[o + 1] << 8));
  }
  std::uint32_t u32() {
    std::size_t o = need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[o + i];
    return v;
  }
  std::uint64_t u64() {
    std::size_t o = need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | data_[o + i];
    return v;
  }
  Bytes blob16() { return take(u16()); }
  Bytes blob32() { return take(u32()); }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::size_t need(std::size_t n) {
    if (pos_ + n > data_.size()) throw std::out_of_range("wire message truncated");
    std::size_t o = pos_;
    pos_ += n;
    return o;
  }
  Bytes take(std::size_t n) {
    std::size_t o = need(n);
    return Bytes(data_.begin() + o, data_.begin() + o + n);
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace bftstack
