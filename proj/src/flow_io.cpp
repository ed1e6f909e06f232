#include "mobonet/flow.hpp"

#include <fstream>

#include "mobonet/io_util.hpp"

namespace mobo {

namespace {
constexpr float kFloMagic = 202021.25f;
}

FlowField read_flo(std::istream& is) {
  const float magic = read_f32(is);
  if (magic != kFloMagic) throw FormatError("flo: bad magic number");
  const std::int32_t w = read_i32(is);
  const std::int32_t h = read_i32(is);
  if (w <= 0 || h <= 0 || w > 100000 || h > 100000)
    throw FormatError("flo: implausible extents " + std::to_string(w) + "x" + std::to_string(h));
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = read_f32(is);
  return f;
}

FlowField read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  try {
    return read_flo(is);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (" + path + ")");
  }
}

void write_flo(std::ostream& os, const FlowField& flow) {
  write_f32(os, kFloMagic);
  write_i32(os, flow.width);
  write_i32(os, flow.height);
  for (float v : flow.data) write_f32(os, v);
}

void write_flo(const std::string& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_flo(os, flow);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mobo
