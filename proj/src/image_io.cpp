#include "mobonet/image.hpp"

#include <cmath>
#include <fstream>

namespace mobo {

namespace {

// PNM header token reader: skips whitespace and '#' comment lines.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError("pnm: truncated header");
  return tok;
}

int parse_int(const std::string& tok) {
  try {
    return std::stoi(tok);
  } catch (...) {
    throw FormatError("pnm: bad integer field: " + tok);
  }
}

void read_header(std::istream& is, const char* magic, int& w, int& h, int& maxval) {
  std::string tok = next_token(is);
  if (tok != magic) throw FormatError(std::string("pnm: expected ") + magic + ", got " + tok);
  w = parse_int(next_token(is));
  h = parse_int(next_token(is));
  maxval = parse_int(next_token(is));
  if (w <= 0 || h <= 0) throw FormatError("pnm: implausible extents");
  if (maxval != 255 && maxval != 65535) throw FormatError("pnm: unsupported maxval");
  // header ends with exactly one whitespace byte before binary data
}

std::vector<unsigned char> read_payload(std::istream& is, std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes)))
    throw FormatError("pnm: truncated payload");
  return buf;
}

}  // namespace

ImageFrame read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  int w, h, maxval;
  read_header(is, "P6", w, h, maxval);
  if (maxval != 255) throw FormatError("ppm: only 8-bit frames supported");
  auto buf = read_payload(is, static_cast<std::size_t>(w) * h * 3);
  ImageFrame img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, x, y) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const ImageFrame& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(std::max(img.at(c, x, y), 0.0f), 1.0f);
        buf[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed: " + path);
}

GrayMap read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  int w, h, maxval;
  read_header(is, "P5", w, h, maxval);
  GrayMap map(w, h);
  if (maxval == 255) {
    auto buf = read_payload(is, static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < buf.size(); ++i) map.data[i] = buf[i] / 255.0f;
  } else {
    auto buf = read_payload(is, static_cast<std::size_t>(w) * h * 2);
    for (std::size_t i = 0; i < map.data.size(); ++i) {
      const unsigned hi = buf[2 * i], lo = buf[2 * i + 1];  // big-endian per format
      map.data[i] = static_cast<float>((hi << 8) | lo) / 65535.0f;
    }
  }
  return map;
}

void write_pgm8(const std::string& path, const GrayMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P5\n" << map.width << " " << map.height << "\n255\n";
  std::vector<unsigned char> buf(map.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float v = std::min(std::max(map.data[i], 0.0f), 1.0f);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed: " + path);
}

void write_pgm16(const std::string& path, const GrayMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P5\n" << map.width << " " << map.height << "\n65535\n";
  std::vector<unsigned char> buf(map.data.size() * 2);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    const float v = std::min(std::max(map.data[i], 0.0f), 1.0f);
    const unsigned q = static_cast<unsigned>(std::lround(v * 65535.0f));
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mobo
