#pragma once

// Parameter checkpoint: little-endian binary.
//
//   "SFCK"  u32 version
//   u32 header_len, header bytes ("key=value\n" lines)
//   u32 tensor_count
//   per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f32 data[numel]

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "synfault/tensor.hpp"

namespace synfault::nn {

inline constexpr char kCheckpointMagic[4] = {'S', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors) if (t.name == name) return &t;
    return nullptr;
  }
};

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Bounds-checked little-endian reader over an in-memory buffer.
class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) throw FormatError(what_ + ": truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void seek(std::size_t p) {
    if (p > buf_.size()) throw FormatError(what_ + ": offset past end");
    pos_ = p;
  }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace io

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 4);
  io::put_u32(out, kCheckpointVersion);
  std::string header;
  for (const auto& [k, v] : ck.header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ParameterError("checkpoint header entries may not contain '=' in keys or newlines");
    }
    header += k + "=" + v + "\n";
  }
  io::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  io::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    io::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    io::put_u32(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape) io::put_u64(out, d);
    for (float v : t.tensor.data) io::put_f32(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  io::Reader r(bytes, "checkpoint");
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw FormatError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  Checkpoint ck;
  std::istringstream hs(r.bytes(r.u32()));
  for (std::string line; std::getline(hs, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed header line");
    ck.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible rank");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim != 0 && total > (std::uint64_t{1} << 40) / dim) throw FormatError("checkpoint: implausible shape");
      total *= dim;
      t.tensor.shape.push_back(static_cast<std::size_t>(dim));
    }
    r.need(static_cast<std::size_t>(total) * 4);
    t.tensor.data.resize(static_cast<std::size_t>(total));
    for (float& v : t.tensor.data) v = r.f32();
    ck.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

template <std::floating_point T>
Checkpoint snapshot(const ParameterStore<T>& params, std::map<std::string, std::string> header = {}) {
  Checkpoint ck;
  ck.header = std::move(header);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    NamedTensor t{p.name, Tensor<float>(p.value.shape)};
    for (std::size_t j = 0; j < p.value.size(); ++j) t.tensor[j] = static_cast<float>(p.value[j]);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

/// Copies every stored tensor into the same-named parameter. Each parameter of
/// the store must be present with an identical shape.
template <std::floating_point T>
void restore(const Checkpoint& ck, ParameterStore<T>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const NamedTensor* t = ck.find(p.name);
    if (!t) throw FormatError("checkpoint lacks parameter " + p.name);
    if (t->tensor.shape != p.value.shape) {
      throw ShapeError("checkpoint shape " + shape_str(t->tensor.shape) + " for " + p.name + " differs from model " + shape_str(p.value.shape));
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] = static_cast<T>(t->tensor[j]);
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) { io::write_file(path, encode_checkpoint(ck)); }
inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace synfault::nn
