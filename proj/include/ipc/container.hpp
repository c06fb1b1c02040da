#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipc {

// Wire format, little-endian throughout:
//   offset  size  field
//        0     4  magic "IPC1"
//        4     1  version (1)
//        5     4  image width  (true size, before padding)
//        9     4  image height
//       13     8  architecture-descriptor hash
//       21     8  checkpoint content-hash
//       29     4  length of b_z
//       33     *  b_z payload (hyper-latent, decoded first)
//        *     4  length of b_y
//        *     *  b_y payload (latent)
// Header overhead is 37 bytes.
inline constexpr size_t kContainerHeaderBytes = 37;
inline constexpr char kContainerMagic[5] = "IPC1";

struct ContainerMeta {
  uint32_t width = 0;
  uint32_t height = 0;
  uint64_t arch_hash = 0;
  uint64_t checkpoint_hash = 0;
};

struct ContainerError : std::runtime_error {
  enum Kind { BadMagic, BadVersion, Truncated, HashMismatch };
  Kind kind;
  ContainerError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

std::vector<uint8_t> pack_container(const ContainerMeta& meta, const std::vector<uint8_t>& b_z,
                                    const std::vector<uint8_t>& b_y);

struct UnpackedContainer {
  ContainerMeta meta;
  std::vector<uint8_t> b_z;
  std::vector<uint8_t> b_y;
};

UnpackedContainer unpack_container(const std::vector<uint8_t>& bytes);

// compatibility check against the model the caller holds
void validate_container_hashes(const ContainerMeta& meta, uint64_t arch_hash,
                               uint64_t checkpoint_hash);

}  // namespace ipc
