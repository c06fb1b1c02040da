#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipc {

using Shape = std::vector<int>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor, NCHW for images.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if ((long)data.size() != shape_numel(shape))
      throw std::runtime_error("Tensor: element count " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    for (auto& e : t.data) e = v;
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  long size() const { return (long)data.size(); }
  bool empty() const { return data.empty(); }
  T& operator[](long i) { return data[i]; }
  const T& operator[](long i) const { return data[i]; }

  // NCHW access
  T& at4(int n, int c, int h, int w) {
    return data[((long(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[((long(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = (U)data[i];
    return out;
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite((double)v)) return false;
    return true;
  }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw std::runtime_error(std::string(op) + ": shape mismatch, expected " + shape_str(a) +
                             " got " + shape_str(b));
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distributions here are hand-rolled so streams are identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0,1)
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return gen_() % n; }

  template <class It>
  void shuffle(It first, It last) {
    long n = last - first;
    for (long i = n - 1; i > 0; --i) std::swap(first[i], first[below(uint64_t(i + 1))]);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0;
};

inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const uint8_t* p = (const uint8_t*)bytes;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace ipc
