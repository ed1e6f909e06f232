#pragma once

#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mobonet/io_util.hpp"
#include "mobonet/tensor.hpp"

namespace mobo {

// Ordered, named collection of trainable tensors. Registration order is the
// optimizer's iteration order, so it must be deterministic.
template <typename S>
class ParamSet {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> t) {
    if (find(name)) throw StateError("duplicate parameter name: " + name);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor<S>* find(const std::string& name) {
    for (auto& kv : items_)
      if (kv.first == name) return &kv.second;
    return nullptr;
  }
  const Tensor<S>* find(const std::string& name) const {
    return const_cast<ParamSet*>(this)->find(name);
  }

  std::vector<std::pair<std::string, Tensor<S>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  Eigen::Index total_count() const {
    Eigen::Index n = 0;
    for (const auto& kv : items_) n += kv.second.numel();
    return n;
  }

  void zero_grads() {
    for (auto& kv : items_) kv.second.clear_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> items_;
};

// Checkpoint container. Layout (all integers little-endian unsigned 32-bit,
// all parameter data little-endian IEEE-754 binary32):
//   bytes 0-7   magic "MBNCKPT1"
//   u32         version (1)
//   u32 + bytes kind string ("refinenet" or "fusion")
//   u32 + bytes config text, "key=value\n" lines sorted by key
//   u32         record count
//   per record: u32 + bytes name, u32 dims[4] (batch,channels,height,width),
//               f32 values in row-major order
struct CheckpointMeta {
  std::string kind;
  std::map<std::string, std::string> config;
};

namespace detail {

inline constexpr char kCkptMagic[9] = "MBNCKPT1";

inline void write_len_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_len_string(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw FormatError("checkpoint: truncated string");
  return s;
}

inline std::string encode_config(const std::map<std::string, std::string>& config) {
  std::string out;
  for (const auto& kv : config) {
    out += kv.first;
    out += '=';
    out += kv.second;
    out += '\n';
  }
  return out;
}

inline std::map<std::string, std::string> decode_config(const std::string& text) {
  std::map<std::string, std::string> config;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = (nl == std::string::npos) ? text.size() : nl + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed config line: " + line);
    config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return config;
}

inline void read_ckpt_header(std::istream& is, CheckpointMeta& meta) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw FormatError("checkpoint: unsupported version");
  meta.kind = read_len_string(is);
  meta.config = decode_config(read_len_string(is));
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::map<std::string, std::string>& config,
                     const ParamSet<S>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(detail::kCkptMagic, 8);
  write_u32(os, 1);
  detail::write_len_string(os, kind);
  detail::write_len_string(os, detail::encode_config(config));
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& kv : params.items()) {
    detail::write_len_string(os, kv.first);
    const Shape& s = kv.second.shape();
    write_u32(os, static_cast<std::uint32_t>(s.n));
    write_u32(os, static_cast<std::uint32_t>(s.c));
    write_u32(os, static_cast<std::uint32_t>(s.h));
    write_u32(os, static_cast<std::uint32_t>(s.w));
    const auto& v = kv.second.values();
    for (Eigen::Index i = 0; i < v.size(); ++i) write_f32(os, static_cast<float>(v[i]));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  CheckpointMeta meta;
  detail::read_ckpt_header(is, meta);
  return meta;
}

// Fills an existing parameter set; every record must match a registered
// parameter by name and shape and cover all of them.
template <typename S>
CheckpointMeta load_checkpoint(const std::string& path, ParamSet<S>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  CheckpointMeta meta;
  detail::read_ckpt_header(is, meta);
  const std::uint32_t count = read_u32(is);
  if (count != params.size())
    throw ConfigError("checkpoint holds " + std::to_string(count) + " tensors, network expects " +
                      std::to_string(params.size()));
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = detail::read_len_string(is);
    Shape s;
    s.n = read_u32(is);
    s.c = read_u32(is);
    s.h = read_u32(is);
    s.w = read_u32(is);
    Tensor<S>* t = params.find(name);
    if (!t) throw ConfigError("checkpoint tensor has no home: " + name);
    if (!(t->shape() == s))
      throw ConfigError("checkpoint shape mismatch for " + name + ": file " + s.str() +
                        " vs network " + t->shape().str());
    auto& v = t->values();
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(read_f32(is));
  }
  return meta;
}

}  // namespace mobo
