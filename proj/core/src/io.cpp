#include "sasreid/io.hpp"

#include "sasreid/errors.hpp"

namespace sasreid::io {

std::string ByteReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  in_.read(s.data(), static_cast<std::streamsize>(n));
  if (in_.gcount() != static_cast<std::streamsize>(n)) {
    throw DataError(source_ + ": unexpected end of file at byte offset " +
                    std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())));
  }
  offset_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  const std::string b = bytes(4);
  const auto* p = reinterpret_cast<const unsigned char*>(b.data());
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::uint64_t ByteReader::u64() {
  const std::uint64_t lo = u32();
  const std::uint64_t hi = u32();
  return lo | (hi << 32);
}

}  // namespace sasreid::io
