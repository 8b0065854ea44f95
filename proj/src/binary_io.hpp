#pragma once

// Little-endian primitives shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "cumix/error.hpp"

namespace cumix::detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(what + ": truncated file");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return value;
}

inline void put_f32(std::ostream& out, double value) {
  put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

inline double get_f32(std::istream& in, const std::string& what) {
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, what)));
}

inline void expect_magic(std::istream& in, const char (&magic)[5],
                         const std::string& what) {
  char got[4];
  if (!in.read(got, 4)) throw FormatError(what + ": truncated file");
  for (int i = 0; i < 4; ++i) {
    if (got[i] != magic[i]) {
      throw FormatError(what + ": bad magic, expected \"" + std::string(magic) + "\"");
    }
  }
}

inline void expect_eof(std::istream& in, const std::string& what) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(what + ": trailing bytes after payload");
  }
}

}  // namespace cumix::detail
