#pragma once

#include "ipc/autodiff.hpp"

namespace ipc {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one pair per parameter, in parameter order.
template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long step = 0;

  static AdamState init(const std::vector<Var<T>>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.push_back(Tensor<T>::zeros(p->value.shape));
      s.v.push_back(Tensor<T>::zeros(p->value.shape));
    }
    return s;
  }
};

// One bias-corrected Adam update from the gradients currently stored on the
// parameters. Gradients are zeroed afterwards.
template <class T>
void adam_step(const std::vector<Var<T>>& params, AdamState<T>& st, const AdamHyper& h) {
  if (params.size() != st.m.size())
    throw std::runtime_error("adam_step: state holds " + std::to_string(st.m.size()) +
                             " buffers for " + std::to_string(params.size()) + " params");
  st.step += 1;
  T c1 = T(1.0 - std::pow(h.beta1, (double)st.step));
  T c2 = T(1.0 - std::pow(h.beta2, (double)st.step));
  T b1 = T(h.beta1), b2 = T(h.beta2), lr = T(h.lr), eps = T(h.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    p->ensure_grad();
    require_same_shape(p->value.shape, st.m[i].shape, "adam_step");
    for (long j = 0; j < p->value.size(); ++j) {
      T g = p->grad[j];
      T m = st.m[i][j] = b1 * st.m[i][j] + (T(1) - b1) * g;
      T v = st.v[i][j] = b2 * st.v[i][j] + (T(1) - b2) * g * g;
      p->value[j] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
      p->grad[j] = 0;
    }
  }
}

template <class T>
void zero_grads(const std::vector<Var<T>>& params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace ipc
