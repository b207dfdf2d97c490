#pragma once

// Little-endian stream helpers shared by the binary file formats.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>

#include "potd/errors.hpp"

namespace potd::binio {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char(v >> (8 * i));
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char(v >> (8 * i));
  os.write(b, 8);
}

inline std::uint64_t read_le(std::istream& is, int bytes, const std::filesystem::path& path) {
  unsigned char b[8] = {};
  if (!is.read(reinterpret_cast<char*>(b), bytes)) throw IoError("truncated file: " + path.string());
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace potd::binio
