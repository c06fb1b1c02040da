#pragma once

#include <functional>

#include "ipc/tensor.hpp"

namespace ipc {

// Central-difference gradient oracle. Independent of the reverse-mode path:
// only calls the supplied scalar function.
template <class T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& point,
                           T step) {
  Tensor<T> g(point.shape);
  Tensor<T> p = point;
  for (long i = 0; i < p.size(); ++i) {
    T orig = p[i];
    p[i] = orig + step;
    T fp = f(p);
    p[i] = orig - step;
    T fm = f(p);
    p[i] = orig;
    g[i] = (fp - fm) / (T(2) * step);
  }
  return g;
}

// Same oracle restricted to a subset of flat indices (for expensive functions).
template <class T>
std::vector<T> finite_diff_grad_at(const std::function<T(const Tensor<T>&)>& f,
                                   const Tensor<T>& point, T step,
                                   const std::vector<long>& indices) {
  std::vector<T> g;
  g.reserve(indices.size());
  Tensor<T> p = point;
  for (long i : indices) {
    T orig = p[i];
    p[i] = orig + step;
    T fp = f(p);
    p[i] = orig - step;
    T fm = f(p);
    p[i] = orig;
    g.push_back((fp - fm) / (T(2) * step));
  }
  return g;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|) -- relative where values are large,
// absolute near zero
template <class T>
T max_rel_err(const std::vector<T>& a, const std::vector<T>& b) {
  T worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    T denom = std::max(T(1), std::max(std::abs(a[i]), std::abs(b[i])));
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

template <class T>
T max_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
  return max_rel_err(a.data, b.data);
}

}  // namespace ipc
