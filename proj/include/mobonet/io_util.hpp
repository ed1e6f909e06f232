#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <system_error>

#include "mobonet/errors.hpp"

namespace mobo {

// Little-endian binary primitives. The host is assumed little-endian (x86);
// reads and writes go through memcpy to avoid alignment traps.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

inline void write_i32(std::ostream& os, std::int32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

inline void write_f32(std::ostream& os, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  char buf[4];
  is.read(buf, 4);
  if (!is) throw FormatError("unexpected end of stream reading u32");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

inline std::int32_t read_i32(std::istream& is) {
  char buf[4];
  is.read(buf, 4);
  if (!is) throw FormatError("unexpected end of stream reading i32");
  std::int32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

inline float read_f32(std::istream& is) {
  char buf[4];
  is.read(buf, 4);
  if (!is) throw FormatError("unexpected end of stream reading f32");
  float v;
  std::memcpy(&v, buf, 4);
  return v;
}

// Locale-independent decimal formatting via std::to_chars. Used for every
// text artifact (logs, metric tables) so outputs are byte-stable.

inline std::string format_double(double v, int precision = 9) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
  if (res.ec != std::errc{}) throw StateError("to_chars failed");
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int precision) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
  if (res.ec != std::errc{}) throw StateError("to_chars failed");
  return std::string(buf, res.ptr);
}

}  // namespace mobo
