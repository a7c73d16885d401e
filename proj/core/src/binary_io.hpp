#pragma once

// Little-endian framing shared by the checkpoint and binary dataset formats.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idac/error.hpp"

namespace idac::detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) fail(ErrorKind::Parse, "truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

inline void write_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void read_doubles(std::istream& in, std::span<double> values) {
  for (double& v : values) v = std::bit_cast<double>(read_u64(in));
}

inline void write_i32(std::ostream& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  const std::array<char, 4> bytes{static_cast<char>(u & 0xffu), static_cast<char>((u >> 8) & 0xffu),
                                  static_cast<char>((u >> 16) & 0xffu), static_cast<char>((u >> 24) & 0xffu)};
  out.write(bytes.data(), 4);
}

inline std::int32_t read_i32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 4)) fail(ErrorKind::Parse, "truncated file");
  const std::uint32_t u = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return static_cast<std::int32_t>(u);
}

/// Magic, header length, header text.
inline void write_header(std::ostream& out, std::string_view magic, const std::string& header) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
}

inline std::string read_header(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    fail(ErrorKind::Parse, "bad magic bytes, expected " + std::string(magic));
  }
  const std::uint64_t len = read_u64(in);
  if (len > (1ULL << 30)) fail(ErrorKind::Parse, "implausible header length");
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) fail(ErrorKind::Parse, "truncated header");
  return header;
}

}  // namespace idac::detail
