#include "ipc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipc {

void PMFTable::validate() const {
  if (cum.size() < 2 || cum.front() != 0 || cum.back() != kTotal)
    throw std::runtime_error("PMFTable: bad cumulative bounds");
  for (size_t i = 1; i < cum.size(); ++i)
    if (cum[i] <= cum[i - 1]) throw std::runtime_error("PMFTable: frequencies not all >= 1");
}

PMFTable quantize_pmf(const std::vector<double>& pmf, int32_t lo) {
  if (pmf.empty()) throw std::runtime_error("quantize_pmf: empty PMF");
  if (pmf.size() > (1u << 15)) throw std::runtime_error("quantize_pmf: support exceeds 2^15 symbols");
  std::vector<int64_t> freq(pmf.size());
  int64_t total = 0;
  size_t largest = 0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    freq[i] = std::max<int64_t>(1, std::llround(pmf[i] * double(PMFTable::kTotal)));
    total += freq[i];
    if (pmf[i] > pmf[largest]) largest = i;
  }
  int64_t residue = int64_t(PMFTable::kTotal) - total;
  freq[largest] += residue;
  if (freq[largest] < 1)
    throw std::runtime_error("quantize_pmf: support too wide for 16-bit frequencies");
  PMFTable t;
  t.lo = lo;
  t.cum.resize(pmf.size() + 1);
  t.cum[0] = 0;
  for (size_t i = 0; i < pmf.size(); ++i) t.cum[i + 1] = t.cum[i] + (uint32_t)freq[i];
  t.validate();
  return t;
}

namespace {
constexpr uint32_t kTop = 1u << 24;

void propagate_carry(std::vector<uint8_t>& out) {
  long i = (long)out.size() - 1;
  while (i >= 0 && out[i] == 0xFF) out[i--] = 0;
  if (i < 0) throw std::runtime_error("range coder: carry with empty buffer");
  ++out[i];
}
}  // namespace

void RangeEncoder::encode(const PMFTable& table, int32_t symbol) {
  if (!table.in_support(symbol))
    throw std::runtime_error("range coder: symbol " + std::to_string(symbol) +
                             " outside table support [" + std::to_string(table.lo) + "," +
                             std::to_string(table.hi()) + "]");
  uint32_t cum_lo = table.cum[symbol - table.lo];
  uint32_t cum_hi = table.cum[symbol - table.lo + 1];
  uint32_t r = range_ >> 16;
  low_ += uint64_t(r) * cum_lo;
  if (low_ >> 32) {
    propagate_carry(out_);
    low_ &= 0xFFFFFFFFull;
  }
  range_ = r * (cum_hi - cum_lo);
  while (range_ < kTop) {
    out_.push_back(uint8_t(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFull;
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(uint8_t(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFull;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* bytes, size_t n) : bytes_(bytes), n_(n) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= n_) throw std::runtime_error("range coder: truncated stream");
  return bytes_[pos_++];
}

int32_t RangeDecoder::decode(const PMFTable& table) {
  uint32_t r = range_ >> 16;
  uint32_t f = std::min<uint32_t>(code_ / r, PMFTable::kTotal - 1);
  // largest s with cum[s] <= f
  auto it = std::upper_bound(table.cum.begin(), table.cum.end(), f);
  int idx = int(it - table.cum.begin()) - 1;
  uint32_t cum_lo = table.cum[idx];
  uint32_t cum_hi = table.cum[idx + 1];
  code_ -= r * cum_lo;
  range_ = r * (cum_hi - cum_lo);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return table.lo + idx;
}

std::vector<uint8_t> ec_encode(const std::vector<int32_t>& symbols,
                               const std::vector<const PMFTable*>& tables) {
  if (symbols.size() != tables.size())
    throw std::runtime_error("ec_encode: symbol/table count mismatch");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(*tables[i], symbols[i]);
  return enc.finish();
}

std::vector<int32_t> ec_decode(const std::vector<uint8_t>& bytes,
                               const std::vector<const PMFTable*>& tables) {
  RangeDecoder dec(bytes);
  std::vector<int32_t> out;
  out.reserve(tables.size());
  for (const PMFTable* t : tables) out.push_back(dec.decode(*t));
  return out;
}

}  // namespace ipc
