#pragma once

// Little-endian binary helpers with byte-offset error reporting.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace sasreid::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& os, float f) { write_u32(os, std::bit_cast<std::uint32_t>(f)); }
inline void write_f64(std::ostream& os, double d) { write_u64(os, std::bit_cast<std::uint64_t>(d)); }

/// Sequential reader that throws DataError naming the byte offset on short reads.
class ByteReader {
 public:
  ByteReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::uint64_t offset() const { return offset_; }
  /// Accounts for bytes consumed directly from the stream.
  void advance(std::uint64_t n) { offset_ += n; }
  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
};

}  // namespace sasreid::io
