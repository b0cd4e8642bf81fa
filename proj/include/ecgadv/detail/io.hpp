#pragma once

// Shared helpers for the "text header + little-endian float64 blob" files.

#include <bit>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgadv/error.hpp"

namespace ecgadv::detail {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, ErrorCode on_error) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(on_error, "bad number '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, ErrorCode on_error) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(on_error, "bad integer '" + std::string(s) + "'");
  }
  return v;
}

inline void write_le_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
  }
}

/// Reads exactly `count` doubles and requires end of stream afterwards.
inline std::vector<double> read_le_doubles(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw Error(ErrorCode::FormatError, "truncated float64 blob");
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::FormatError, "trailing bytes after float64 blob");
  }
  return values;
}

}  // namespace ecgadv::detail
