#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dafr2/core/error.hpp"

namespace dafr2::io {

static_assert(std::endian::native == std::endian::little, "raw tensor files assume a little-endian host");

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParameterError("short write to " + path.string());
}

template <typename T>
std::span<const unsigned char> as_bytes(std::span<const T> values) {
  return {reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes()};
}

template <typename T>
std::span<const unsigned char> as_bytes(std::span<T> values) {
  return as_bytes(std::span<const T>(values));
}

template <typename T>
std::vector<T> from_bytes(std::span<const unsigned char> bytes, const std::string& what) {
  if (bytes.size() % sizeof(T) != 0) throw FormatError(what + ": size is not a multiple of the element size", bytes.size());
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

/// CRC-32 of a byte range, rendered as 8 lowercase hex digits.
inline std::string crc32_hex(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  std::ostringstream out;
  out << std::hex << std::setw(8) << std::setfill('0') << static_cast<std::uint32_t>(crc);
  return out.str();
}

inline std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("unexpected end of file", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace dafr2::io
