#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tailnet/errors.hpp"

namespace tailnet {

// Little-endian binary writer over an in-memory buffer.
class BinWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { put(v); }
  void u32(uint32_t v) { put(v); }
  void u64(uint64_t v) { put(v); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put(bits);
  }
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) {
    if (s.size() > UINT16_MAX) throw UsageError("string too long for u16 length prefix");
    u16(static_cast<uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<uint8_t>& buffer() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  template <typename T>
  void put(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  std::vector<uint8_t> buf_;
};

// Bounds-checked little-endian reader. Every under-run throws FormatError,
// so truncated files are rejected before any partial object escapes.
class BinReader {
 public:
  BinReader(const uint8_t* data, size_t size, std::string what)
      : p_(data), n_(size), what_(std::move(what)) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() { return get<uint16_t>(); }
  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  double f64() {
    uint64_t bits = get<uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const size_t len = u16();
    const uint8_t* p = take(len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }

  size_t remaining() const { return n_ - pos_; }
  void expect_end() const {
    if (pos_ != n_)
      throw FormatError(what_ + ": " + std::to_string(n_ - pos_) + " unexpected trailing bytes");
  }
  const uint8_t* take(size_t n) {
    if (n_ - pos_ < n) throw FormatError(what_ + ": truncated file");
    const uint8_t* p = p_ + pos_;
    pos_ += n;
    return p;
  }

 private:
  template <typename T>
  T get() {
    const uint8_t* p = take(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
  }

  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
  std::string what_;
};

// Whole-file helpers.
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace tailnet
