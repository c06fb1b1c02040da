#include "ipc/container.hpp"

#include "ipc/serialize.hpp"

namespace ipc {

std::vector<uint8_t> pack_container(const ContainerMeta& meta, const std::vector<uint8_t>& b_z,
                                    const std::vector<uint8_t>& b_y) {
  if (b_z.size() >= (1ull << 32) || b_y.size() >= (1ull << 32))
    throw std::runtime_error("pack_container: payload too large");
  std::vector<uint8_t> b;
  b.reserve(kContainerHeaderBytes + b_z.size() + b_y.size());
  b.insert(b.end(), kContainerMagic, kContainerMagic + 4);
  put_u8(b, 1);
  put_u32(b, meta.width);
  put_u32(b, meta.height);
  put_u64(b, meta.arch_hash);
  put_u64(b, meta.checkpoint_hash);
  put_u32(b, (uint32_t)b_z.size());
  b.insert(b.end(), b_z.begin(), b_z.end());
  put_u32(b, (uint32_t)b_y.size());
  b.insert(b.end(), b_y.begin(), b_y.end());
  return b;
}

UnpackedContainer unpack_container(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kContainerHeaderBytes)
    throw ContainerError(ContainerError::Truncated, "container: shorter than header");
  ByteReader r(bytes);
  if (std::string((const char*)r.take(4), 4) != kContainerMagic)
    throw ContainerError(ContainerError::BadMagic, "container: bad magic");
  uint8_t ver = r.u8();
  if (ver != 1)
    throw ContainerError(ContainerError::BadVersion,
                         "container: unsupported version " + std::to_string(ver));
  UnpackedContainer u;
  u.meta.width = r.u32();
  u.meta.height = r.u32();
  u.meta.arch_hash = r.u64();
  u.meta.checkpoint_hash = r.u64();
  try {
    uint32_t nz = r.u32();
    const uint8_t* pz = r.take(nz);
    u.b_z.assign(pz, pz + nz);
    uint32_t ny = r.u32();
    const uint8_t* py = r.take(ny);
    u.b_y.assign(py, py + ny);
  } catch (const std::runtime_error&) {
    throw ContainerError(ContainerError::Truncated, "container: truncated payload");
  }
  if (r.remaining() != 0)
    throw ContainerError(ContainerError::Truncated, "container: trailing bytes");
  return u;
}

void validate_container_hashes(const ContainerMeta& meta, uint64_t arch_hash,
                               uint64_t checkpoint_hash) {
  if (meta.arch_hash != arch_hash)
    throw ContainerError(ContainerError::HashMismatch,
                         "container: architecture descriptor does not match this checkpoint");
  if (meta.checkpoint_hash != checkpoint_hash)
    throw ContainerError(ContainerError::HashMismatch,
                         "container: bitstream was produced by a different checkpoint");
}

}  // namespace ipc
