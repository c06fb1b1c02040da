#pragma once

#include <cstring>
#include <fstream>

#include "ipc/tensor.hpp"

namespace ipc {

// little-endian primitives over a byte buffer
inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}
inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}
inline void put_f32(std::vector<uint8_t>& b, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(b, u);
}

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  explicit ByteReader(const std::vector<uint8_t>& v) : p_(v.data()), n_(v.size()) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    const uint8_t* q = take(2);
    return uint16_t(q[0]) | uint16_t(q[1]) << 8;
  }
  uint32_t u32() {
    const uint8_t* q = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(q[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    const uint8_t* q = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(q[i]) << (8 * i);
    return v;
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  const uint8_t* take(size_t n) {
    if (pos_ + n > n_) throw std::runtime_error("serialize: truncated input");
    const uint8_t* q = p_ + pos_;
    pos_ += n;
    return q;
  }
  size_t remaining() const { return n_ - pos_; }

 private:
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

// tensor blob: rank u32, extents u32 each, f32 payload
inline void put_tensor(std::vector<uint8_t>& b, const Tensor<float>& t) {
  put_u32(b, (uint32_t)t.shape.size());
  for (int e : t.shape) put_u32(b, (uint32_t)e);
  for (float v : t.data) put_f32(b, v);
}

inline Tensor<float> read_tensor(ByteReader& r) {
  uint32_t rank = r.u32();
  if (rank > 8) throw std::runtime_error("serialize: implausible tensor rank");
  Shape s(rank);
  for (auto& e : s) e = (int)r.u32();
  Tensor<float> t(s);
  for (auto& v : t.data) v = r.f32();
  return t;
}

inline void put_str(std::vector<uint8_t>& b, const std::string& s) {
  put_u32(b, (uint32_t)s.size());
  b.insert(b.end(), s.begin(), s.end());
}

inline std::string read_str(ByteReader& r) {
  uint32_t n = r.u32();
  const uint8_t* p = r.take(n);
  return std::string((const char*)p, n);
}

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

// Generic checkpoint container shared by codec and embedder files.
struct BlobFile {
  std::string magic;  // "IPCK" codec, "IPCE" embedder
  uint8_t version = 1;
  std::string arch;  // canonical architecture descriptor string
  NamedTensors tensors;
  NamedTensors opt_tensors;
  std::string config_echo;  // UTF-8 key=value lines
};

inline uint64_t named_tensors_hash(const NamedTensors& ts) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : ts) {
    h = fnv1a64(name.data(), name.size(), h);
    if (!t.data.empty()) h = fnv1a64(t.data.data(), t.data.size() * 4, h);
  }
  return h;
}

inline std::vector<uint8_t> serialize_blob_file(const BlobFile& bf) {
  std::vector<uint8_t> b;
  b.insert(b.end(), bf.magic.begin(), bf.magic.end());
  put_u8(b, bf.version);
  put_str(b, bf.arch);
  auto put_group = [&](const NamedTensors& ts) {
    put_u32(b, (uint32_t)ts.size());
    for (const auto& [name, t] : ts) {
      put_str(b, name);
      put_tensor(b, t);
    }
  };
  put_group(bf.tensors);
  put_group(bf.opt_tensors);
  put_str(b, bf.config_echo);
  return b;
}

inline BlobFile parse_blob_file(const std::vector<uint8_t>& bytes, const std::string& magic) {
  ByteReader r(bytes);
  BlobFile bf;
  bf.magic = std::string((const char*)r.take(4), 4);
  if (bf.magic != magic)
    throw std::runtime_error("checkpoint: bad magic, expected " + magic + " got " + bf.magic);
  bf.version = r.u8();
  if (bf.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  bf.arch = read_str(r);
  auto read_group = [&]() {
    NamedTensors ts;
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
      std::string name = read_str(r);
      ts.emplace_back(std::move(name), read_tensor(r));
    }
    return ts;
  };
  bf.tensors = read_group();
  bf.opt_tensors = read_group();
  bf.config_echo = read_str(r);
  return bf;
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write((const char*)bytes.data(), (long)bytes.size());
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open: " + path);
  auto n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> b((size_t)n);
  f.read((char*)b.data(), n);
  if (!f) throw std::runtime_error("read failed: " + path);
  return b;
}

inline void write_blob_file(const std::string& path, const BlobFile& bf) {
  write_file_bytes(path, serialize_blob_file(bf));
}

inline BlobFile read_blob_file(const std::string& path, const std::string& magic) {
  return parse_blob_file(read_file_bytes(path), magic);
}

}  // namespace ipc
