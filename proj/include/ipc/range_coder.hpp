#pragma once

#include <cstdint>
#include <vector>

#include "ipc/tensor.hpp"

namespace ipc {

// Quantized symbol frequencies for the range coder. Symbols are integers in
// [lo, lo + num_symbols). cum is strictly increasing with cum.front() == 0 and
// cum.back() == 1<<16, so every in-support symbol has frequency >= 1.
struct PMFTable {
  static constexpr uint32_t kTotal = 1u << 16;

  int32_t lo = 0;
  std::vector<uint32_t> cum;

  int num_symbols() const { return (int)cum.size() - 1; }
  int32_t hi() const { return lo + num_symbols() - 1; }
  bool in_support(int32_t s) const { return s >= lo && s <= hi(); }
  uint32_t freq(int32_t s) const { return cum[s - lo + 1] - cum[s - lo]; }
  void validate() const;
};

// Build a coder table from a real-valued PMF over [lo, lo+pmf.size()).
// Every bin gets frequency >= 1; the largest bin absorbs the rounding residue.
PMFTable quantize_pmf(const std::vector<double>& pmf, int32_t lo);

// 32-bit range coder, 16-bit frequencies, byte-wise renormalization.
class RangeEncoder {
 public:
  void encode(const PMFTable& table, int32_t symbol);
  std::vector<uint8_t> finish();  // flushes; encoder is spent afterwards

 private:
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* bytes, size_t n);
  explicit RangeDecoder(const std::vector<uint8_t>& b) : RangeDecoder(b.data(), b.size()) {}
  int32_t decode(const PMFTable& table);

 private:
  uint8_t next_byte();
  const uint8_t* bytes_;
  size_t n_, pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

// Whole-sequence helpers; tables[i] is the model for symbols[i].
std::vector<uint8_t> ec_encode(const std::vector<int32_t>& symbols,
                               const std::vector<const PMFTable*>& tables);
std::vector<int32_t> ec_decode(const std::vector<uint8_t>& bytes,
                               const std::vector<const PMFTable*>& tables);

}  // namespace ipc
