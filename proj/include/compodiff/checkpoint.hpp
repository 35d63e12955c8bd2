// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Binary container: magic, version, a UTF-8 config snapshot, a named tensor
// table (64-bit little-endian floats) and a trailing CRC-32. Round-trips are
// bitwise lossless; the checksum is verified on load.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "compodiff/nn.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320U ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

inline std::uint32_t crc32(const std::string& bytes) {
  std::uint32_t c = 0xffffffffU;
  for (unsigned char ch : bytes) c = crc32_table()[(c ^ ch) & 0xffU] ^ (c >> 8);
  return c ^ 0xffffffffU;
}

struct ByteWriter {
  std::string bytes;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.append(s);
  }
};

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  explicit ByteReader(const std::string& b) : bytes(b) {}
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

struct Checkpoint {
  static constexpr char kMagic[9] = "COMPODIF";
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  std::string serialize() const {
    detail::ByteWriter w;
    w.bytes.append(kMagic, 8);
    w.u32(kVersion);
    w.str(config_text);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(t.ndim()));
      for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (double v : t.data()) w.f64(v);
    }
    const std::uint32_t crc = detail::crc32(w.bytes);
    w.u32(crc);
    return std::move(w.bytes);
  }

  static Checkpoint deserialize(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 8, kMagic, 8) != 0)
      throw std::runtime_error("checkpoint: bad magic");
    const std::string body = bytes.substr(0, bytes.size() - 4);
    detail::ByteReader tail(bytes);
    tail.pos = bytes.size() - 4;
    if (tail.u32() != detail::crc32(body))
      throw std::runtime_error("checkpoint: checksum mismatch");
    detail::ByteReader r(bytes);
    r.pos = 8;
    const std::uint32_t version = r.u32();
    if (version != kVersion)
      throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint out;
    out.config_text = r.str();
    const std::uint32_t count = r.u32();
    out.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const std::uint32_t nd = r.u32();
      Shape shape(nd);
      for (std::uint32_t d = 0; d < nd; ++d) shape[d] = static_cast<int>(r.u32());
      const std::int64_t n = numel(shape);
      std::vector<double> data(static_cast<std::size_t>(n));
      for (auto& v : data) v = r.f64();
      out.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    const std::string bytes = serialize();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }
};

inline Checkpoint checkpoint_from_params(const NamedParams& params, std::string config_text) {
  Checkpoint ck;
  ck.config_text = std::move(config_text);
  ck.tensors.reserve(params.size());
  for (const auto& [name, t] : params) ck.tensors.emplace_back(name, t.detached_copy());
  return ck;
}

// copy checkpoint values into live parameters, matched by name and shape
inline void load_params(const Checkpoint& ck, NamedParams& params) {
  for (auto& [name, t] : params) {
    const Tensor* src = ck.find(name);
    if (src == nullptr) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (src->shape() != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file has " +
                               shape_str(src->shape()) + ", model expects " +
                               shape_str(t.shape()));
    std::copy(src->data().begin(), src->data().end(), t.raw().begin());
  }
}

// FNV-1a over raw parameter bytes; used to verify frozen parameter sets
inline std::uint64_t params_checksum(const NamedParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t.data().data(), t.data().size_bytes());
  }
  return h;
}

}  // namespace compodiff
