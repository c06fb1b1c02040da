#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>

#include "ipc/tensor.hpp"

namespace ipc {

// Define-by-run reverse-mode graph. Each Node holds its forward value, the
// accumulated gradient, references to its inputs and a closure that pushes
// this node's gradient into them. Nodes form a DAG through shared_ptr inputs.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool is_param = false;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape);
  }
  void zero_grad() {
    for (auto& g : grad.data) g = T(0);
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  return n;
}

template <class T>
Var<T> make_param(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->is_param = true;
  return n;
}

// input flagged for gradient (non-parameter leaf)
template <class T>
Var<T> make_input(Tensor<T> v, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

template <class T, class BP>
Var<T> make_node(Tensor<T> val, std::vector<Var<T>> ins, BP bp) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(val);
  n->inputs = std::move(ins);
  for (auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(bp);
  return n;
}

// Reverse topological sweep from a scalar seed. Gradients accumulate; a second
// call without zeroing parameter grads adds on top of the first.
template <class T>
void backward(const Var<T>& seed) {
  if (seed->value.size() != 1)
    throw std::runtime_error("backward: seed must be scalar, got " + shape_str(seed->value.shape));
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({seed.get(), 0});
  seen.insert(seed.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<T>* in = node->inputs[idx++].get();
      if (in->requires_grad && !seen.count(in)) {
        seen.insert(in);
        stack.push_back({in, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // interior node grads are per-call scratch; only leaves accumulate across calls
  for (Node<T>* n : order)
    if (!n->inputs.empty()) n->zero_grad();
  seed->ensure_grad();
  seed->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

namespace detail {
template <class T>
void accum(const Var<T>& in, const Tensor<T>& g) {
  if (!in->requires_grad) return;
  in->ensure_grad();
  for (long i = 0; i < g.size(); ++i) in->grad[i] += g[i];
}
}  // namespace detail

// ---- elementwise binary ----

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape, b->value.shape, "add");
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    detail::accum(n.inputs[0], n.grad);
    detail::accum(n.inputs[1], n.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape, b->value.shape, "sub");
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    detail::accum(n.inputs[0], n.grad);
    if (n.inputs[1]->requires_grad) {
      auto& in = n.inputs[1];
      in->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i) in->grad[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape, b->value.shape, "mul");
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto &a = n.inputs[0], &b = n.inputs[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> div_(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape, b->value.shape, "div");
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto &a = n.inputs[0], &b = n.inputs[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] / b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i)
        b->grad[i] -= n.grad[i] * n.value[i] / b->value[i];
    }
  });
}

// ---- scalar-constant ops ----

template <class T>
Var<T> smul(const Var<T>& a, T c) {
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_node<T>(std::move(out), {a}, [c](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * c;
  });
}

template <class T>
Var<T> sadd(const Var<T>& a, T c) {
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
  return make_node<T>(std::move(out), {a},
                      [](Node<T>& n) { detail::accum(n.inputs[0], n.grad); });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return smul(a, T(-1));
}

// ---- elementwise unary ----

namespace detail {
template <class T, class F, class D>
Var<T> unary(const Var<T>& a, F f, D df) {
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  return make_node<T>(std::move(out), {a}, [df](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    for (long i = 0; i < n.grad.size(); ++i)
      a->grad[i] += n.grad[i] * df(a->value[i], n.value[i]);
  });
}
}  // namespace detail

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return detail::unary(
      a, [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x, T) { return x >= T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> softplus(const Var<T>& a) {
  return detail::unary(
      a,
      [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](T x, T) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      });
}

template <class T>
Var<T> abs_(const Var<T>& a) {
  // subgradient at 0 takes the right-hand value +1
  return detail::unary(a, [](T x) { return std::abs(x); },
                       [](T x, T) { return x >= T(0) ? T(1) : T(-1); });
}

template <class T>
Var<T> log_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> exp_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> tanh_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); },
                       [](T, T y) { return T(1) - y * y; });
}

// standard normal CDF
template <class T>
Var<T> normal_cdf(const Var<T>& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return detail::unary(
      a, [](T x) { return T(0.5 * std::erfc(-double(x) * inv_sqrt2)); },
      [](T x, T) { return T(inv_sqrt2pi * std::exp(-0.5 * double(x) * double(x))); });
}

// forward max(x, bound); gradient passes when above the bound or when the
// upstream gradient would push the value up (keeps floored activations trainable)
template <class T>
Var<T> lower_bound(const Var<T>& a, T bound) {
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = std::max(a->value[i], bound);
  return make_node<T>(std::move(out), {a}, [bound](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    for (long i = 0; i < n.grad.size(); ++i)
      if (a->value[i] >= bound || n.grad[i] < T(0)) a->grad[i] += n.grad[i];
  });
}

// round half away from zero
template <class T>
T round_half_away(T x) {
  return x >= T(0) ? std::floor(x + T(0.5)) : std::ceil(x - T(0.5));
}

// straight-through rounding: forward rounds, backward is identity
template <class T>
Var<T> quantize_ste(const Var<T>& a) {
  Tensor<T> out(a->value.shape);
  for (long i = 0; i < out.size(); ++i) out[i] = round_half_away(a->value[i]);
  return make_node<T>(std::move(out), {a},
                      [](Node<T>& n) { detail::accum(n.inputs[0], n.grad); });
}

// ---- broadcast with a 1-element Var ----

template <class T>
Var<T> bmul(const Var<T>& a, const Var<T>& s) {
  if (s->value.size() != 1) throw std::runtime_error("bmul: scalar operand must have 1 element");
  Tensor<T> out(a->value.shape);
  T c = s->value[0];
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_node<T>(std::move(out), {a, s}, [](Node<T>& n) {
    auto &a = n.inputs[0], &s = n.inputs[1];
    T c = s->value[0];
    if (a->requires_grad) {
      a->ensure_grad();
      for (long i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * c;
    }
    if (s->requires_grad) {
      s->ensure_grad();
      T acc = 0;
      for (long i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * a->value[i];
      s->grad[0] += acc;
    }
  });
}

template <class T>
Var<T> badd(const Var<T>& a, const Var<T>& s) {
  if (s->value.size() != 1) throw std::runtime_error("badd: scalar operand must have 1 element");
  Tensor<T> out(a->value.shape);
  T c = s->value[0];
  for (long i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
  return make_node<T>(std::move(out), {a, s}, [](Node<T>& n) {
    detail::accum(n.inputs[0], n.grad);
    auto& s = n.inputs[1];
    if (s->requires_grad) {
      s->ensure_grad();
      T acc = 0;
      for (long i = 0; i < n.grad.size(); ++i) acc += n.grad[i];
      s->grad[0] += acc;
    }
  });
}

// 1-element view of a flat index
template <class T>
Var<T> elem(const Var<T>& a, long idx) {
  Tensor<T> out({1}, {a->value[idx]});
  return make_node<T>(std::move(out), {a}, [idx](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    a->grad[idx] += n.grad[0];
  });
}

// ---- reductions ----

template <class T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (long i = 0; i < a->value.size(); ++i) acc += a->value[i];
  return make_node<T>(Tensor<T>::scalar(acc), {a}, [](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    T g = n.grad[0];
    for (long i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return smul(sum(a), T(1) / T(a->value.size()));
}

template <class T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape, b->value.shape, "dot");
  T acc = 0;
  for (long i = 0; i < a->value.size(); ++i) acc += a->value[i] * b->value[i];
  return make_node<T>(Tensor<T>::scalar(acc), {a, b}, [](Node<T>& n) {
    auto &a = n.inputs[0], &b = n.inputs[1];
    T g = n.grad[0];
    if (a->requires_grad) {
      a->ensure_grad();
      for (long i = 0; i < a->grad.size(); ++i) a->grad[i] += g * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (long i = 0; i < b->grad.size(); ++i) b->grad[i] += g * a->value[i];
    }
  });
}

template <class T>
Var<T> l2_norm(const Var<T>& a) {
  T acc = 0;
  for (long i = 0; i < a->value.size(); ++i) acc += a->value[i] * a->value[i];
  T nrm = std::sqrt(acc);
  return make_node<T>(Tensor<T>::scalar(nrm), {a}, [](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    T g = n.grad[0], nrm = n.value[0];
    if (nrm == T(0)) return;  // subgradient 0 at the origin
    for (long i = 0; i < a->grad.size(); ++i) a->grad[i] += g * a->value[i] / nrm;
  });
}

// ---- matmul ----

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
      a->value.shape[1] != b->value.shape[0])
    throw std::runtime_error("matmul: incompatible shapes " + shape_str(a->value.shape) + " * " +
                             shape_str(b->value.shape));
  int m = a->value.shape[0], k = a->value.shape[1], n2 = b->value.shape[1];
  Tensor<T> out({m, n2});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      T av = a->value[long(i) * k + p];
      const T* brow = &b->value[long(p) * n2];
      T* crow = &out[long(i) * n2];
      for (int j = 0; j < n2; ++j) crow[j] += av * brow[j];
    }
  return make_node<T>(std::move(out), {a, b}, [m, k, n2](Node<T>& n) {
    auto &a = n.inputs[0], &b = n.inputs[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          T acc = 0;
          const T* grow = &n.grad[long(i) * n2];
          const T* brow = &b->value[long(p) * n2];
          for (int j = 0; j < n2; ++j) acc += grow[j] * brow[j];
          a->grad[long(i) * k + p] += acc;
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          T av = a->value[long(i) * k + p];
          const T* grow = &n.grad[long(i) * n2];
          T* brow = &b->grad[long(p) * n2];
          for (int j = 0; j < n2; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

// ---- shape ops ----

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
  if (shape_numel(s) != a->value.size())
    throw std::runtime_error("reshape: element count mismatch " + shape_str(a->value.shape) +
                             " -> " + shape_str(s));
  Tensor<T> out(std::move(s), a->value.data);
  return make_node<T>(std::move(out), {a},
                      [](Node<T>& n) { detail::accum(n.inputs[0], n.grad); });
}

// mean over H,W per (N,C): [N,C,H,W] -> [N,C]
template <class T>
Var<T> spatial_mean(const Var<T>& a) {
  const Shape& s = a->value.shape;
  if (s.size() != 4) throw std::runtime_error("spatial_mean: expects NCHW, got " + shape_str(s));
  int N = s[0], C = s[1];
  long hw = long(s[2]) * s[3];
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T acc = 0;
      const T* p = &a->value[(long(n) * C + c) * hw];
      for (long i = 0; i < hw; ++i) acc += p[i];
      out[long(n) * C + c] = acc / T(hw);
    }
  return make_node<T>(std::move(out), {a}, [N, C, hw](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < C; ++c) {
        T g = n.grad[long(b) * C + c] / T(hw);
        T* p = &a->grad[(long(b) * C + c) * hw];
        for (long i = 0; i < hw; ++i) p[i] += g;
      }
  });
}

// channel slice [N,C,H,W] -> [N,c1-c0,H,W]
template <class T>
Var<T> slice_channels(const Var<T>& a, int c0, int c1) {
  const Shape& s = a->value.shape;
  if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1)
    throw std::runtime_error("slice_channels: bad range on " + shape_str(s));
  int N = s[0], C = s[1], cc = c1 - c0;
  long hw = long(s[2]) * s[3];
  Tensor<T> out({N, cc, s[2], s[3]});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < cc; ++c)
      std::copy_n(&a->value[(long(n) * C + c0 + c) * hw], hw, &out[(long(n) * cc + c) * hw]);
  return make_node<T>(std::move(out), {a}, [N, C, c0, cc, hw](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < cc; ++c) {
        const T* g = &n.grad[(long(b) * cc + c) * hw];
        T* p = &a->grad[(long(b) * C + c0 + c) * hw];
        for (long i = 0; i < hw; ++i) p[i] += g[i];
      }
  });
}

// concatenate along channels
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_channels: empty input");
  const Shape& s0 = parts[0]->value.shape;
  int N = s0[0], H = s0[2], W = s0[3], C = 0;
  for (auto& p : parts) {
    const Shape& s = p->value.shape;
    if (s.size() != 4 || s[0] != N || s[2] != H || s[3] != W)
      throw std::runtime_error("concat_channels: shape mismatch " + shape_str(s));
    C += s[1];
  }
  long hw = long(H) * W;
  Tensor<T> out({N, C, H, W});
  int off = 0;
  for (auto& p : parts) {
    int pc = p->value.shape[1];
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < pc; ++c)
        std::copy_n(&p->value[(long(n) * pc + c) * hw], hw,
                    &out[(long(n) * C + off + c) * hw]);
    off += pc;
  }
  return make_node<T>(std::move(out), parts, [N, C, hw](Node<T>& n) {
    int off = 0;
    for (auto& p : n.inputs) {
      int pc = p->value.shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int b = 0; b < N; ++b)
          for (int c = 0; c < pc; ++c) {
            const T* g = &n.grad[(long(b) * C + off + c) * hw];
            T* q = &p->grad[(long(b) * pc + c) * hw];
            for (long i = 0; i < hw; ++i) q[i] += g[i];
          }
      }
      off += pc;
    }
  });
}

// out[n,d] = x[n,d] + b[d]
template <class T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& b) {
  const Shape& s = x->value.shape;
  if (s.size() != 2 || b->value.size() != s[1])
    throw std::runtime_error("add_row_bias: " + shape_str(s) + " vs " +
                             shape_str(b->value.shape));
  int n = s[0], d = s[1];
  Tensor<T> out(s);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[long(i) * d + j] = x->value[long(i) * d + j] + b->value[j];
  return make_node<T>(std::move(out), {x, b}, [n, d](Node<T>& nd) {
    detail::accum(nd.inputs[0], nd.grad);
    auto& b = nd.inputs[1];
    if (b->requires_grad) {
      b->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) b->grad[j] += nd.grad[long(i) * d + j];
    }
  });
}

// mean softmax cross-entropy over rows of [N,K] logits
template <class T>
Var<T> softmax_xent(const Var<T>& logits, const std::vector<int>& labels) {
  const Shape& s = logits->value.shape;
  if (s.size() != 2 || (size_t)s[0] != labels.size())
    throw std::runtime_error("softmax_xent: logits " + shape_str(s) + " vs " +
                             std::to_string(labels.size()) + " labels");
  int N = s[0], K = s[1];
  T loss = 0;
  for (int n = 0; n < N; ++n) {
    const T* row = &logits->value[long(n) * K];
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T lse = 0;
    for (int k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    lse = mx + std::log(lse);
    loss += lse - row[labels[n]];
  }
  loss /= T(N);
  return make_node<T>(Tensor<T>::scalar(loss), {logits}, [labels, N, K](Node<T>& n) {
    auto& a = n.inputs[0];
    a->ensure_grad();
    T g = n.grad[0] / T(N);
    for (int b = 0; b < N; ++b) {
      const T* row = &a->value[long(b) * K];
      T mx = row[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      T z = 0;
      for (int k = 0; k < K; ++k) z += std::exp(row[k] - mx);
      T* gr = &a->grad[long(b) * K];
      for (int k = 0; k < K; ++k) gr[k] += g * (std::exp(row[k] - mx) / z);
      gr[labels[b]] -= g;
    }
  });
}

}  // namespace ipc
