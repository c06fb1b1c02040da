#pragma once

#include "ipc/autodiff.hpp"

namespace ipc {

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_acc(const T* A, const T* B, T* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* a = A + long(i) * k;
    T* c = C + long(i) * n;
    for (int p = 0; p < k; ++p) {
      T av = a[p];
      const T* b = B + long(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <class T>
void gemm_abT_acc(const T* A, const T* B, T* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* a = A + long(i) * n;
    for (int j = 0; j < k; ++j) {
      const T* b = B + long(j) * n;
      T acc = 0;
      for (int p = 0; p < n; ++p) acc += a[p] * b[p];
      C[long(i) * k + j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <class T>
void gemm_aTb_acc(const T* A, const T* B, T* C, int m, int k, int n) {
  for (int p = 0; p < m; ++p) {
    const T* a = A + long(p) * k;
    const T* b = B + long(p) * n;
    for (int i = 0; i < k; ++i) {
      T av = a[i];
      T* c = C + long(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// image [C,IH,IW] -> col [C*kh*kw, GH*GW]; grid GH = (IH + 2p - kh)/s + 1
template <class T>
void im2col(const T* x, int C, int IH, int IW, int kh, int kw, int stride, int pad, int GH,
            int GW, T* col) {
  long idx = 0;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj)
        for (int gi = 0; gi < GH; ++gi) {
          int ii = gi * stride - pad + ki;
          const T* row = (ii >= 0 && ii < IH) ? x + (long(c) * IH + ii) * IW : nullptr;
          for (int gj = 0; gj < GW; ++gj) {
            int jj = gj * stride - pad + kj;
            col[idx++] = (row && jj >= 0 && jj < IW) ? row[jj] : T(0);
          }
        }
}

// adjoint of im2col: scatter-add col back into the image
template <class T>
void col2im_acc(const T* col, int C, int IH, int IW, int kh, int kw, int stride, int pad, int GH,
                int GW, T* x) {
  long idx = 0;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj)
        for (int gi = 0; gi < GH; ++gi) {
          int ii = gi * stride - pad + ki;
          if (ii < 0 || ii >= IH) {
            idx += GW;
            continue;
          }
          T* row = x + (long(c) * IH + ii) * IW;
          for (int gj = 0; gj < GW; ++gj) {
            int jj = gj * stride - pad + kj;
            if (jj >= 0 && jj < IW) row[jj] += col[idx];
            ++idx;
          }
        }
}

}  // namespace detail

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const Shape& xs = x->value.shape;
  const Shape& ws = w->value.shape;
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw std::runtime_error("conv2d: input " + shape_str(xs) + " vs kernel " + shape_str(ws));
  int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  int Cout = ws[0], kh = ws[2], kw = ws[3];
  if (b->value.size() != Cout) throw std::runtime_error("conv2d: bias size mismatch");
  int OH = (H + 2 * pad - kh) / stride + 1;
  int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0)
    throw std::runtime_error("conv2d: output collapsed for input " + shape_str(xs));
  int K = Cin * kh * kw;
  long ohw = long(OH) * OW;
  Tensor<T> out({N, Cout, OH, OW});
  std::vector<T> col(long(K) * ohw);
  for (int n = 0; n < N; ++n) {
    detail::im2col(&x->value[long(n) * Cin * H * W], Cin, H, W, kh, kw, stride, pad, OH, OW,
                   col.data());
    T* y = &out[long(n) * Cout * ohw];
    for (int c = 0; c < Cout; ++c) {
      T bv = b->value[c];
      T* row = y + long(c) * ohw;
      for (long i = 0; i < ohw; ++i) row[i] = bv;
    }
    detail::gemm_acc(w->value.data.data(), col.data(), y, Cout, K, (int)ohw);
  }
  auto bp = [N, Cin, H, W, Cout, kh, kw, stride, pad, OH, OW, K, ohw](Node<T>& nd) {
    auto &x = nd.inputs[0], &w = nd.inputs[1], &b = nd.inputs[2];
    std::vector<T> col(long(K) * ohw);
    std::vector<T> dcol;
    if (x->requires_grad) dcol.resize(long(K) * ohw);
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const T* dy = &nd.grad[long(n) * Cout * ohw];
      if (w->requires_grad || x->requires_grad)
        detail::im2col(&x->value[long(n) * Cin * H * W], Cin, H, W, kh, kw, stride, pad, OH, OW,
                       col.data());
      if (w->requires_grad)
        detail::gemm_abT_acc(dy, col.data(), w->grad.data.data(), Cout, (int)ohw, K);
      if (b->requires_grad)
        for (int c = 0; c < Cout; ++c) {
          T acc = 0;
          const T* row = dy + long(c) * ohw;
          for (long i = 0; i < ohw; ++i) acc += row[i];
          b->grad[c] += acc;
        }
      if (x->requires_grad) {
        std::fill(dcol.begin(), dcol.end(), T(0));
        detail::gemm_aTb_acc(w->value.data.data(), dy, dcol.data(), Cout, K, (int)ohw);
        detail::col2im_acc(dcol.data(), Cin, H, W, kh, kw, stride, pad, OH, OW,
                           &x->grad[long(n) * Cin * H * W]);
      }
    }
  };
  return make_node<T>(std::move(out), {x, w, b}, bp);
}

// x [N,Cin,H,W], w [Cin,Cout,kh,kw], b [Cout]; OH = (H-1)*stride - 2*pad + kh + opad
template <class T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad,
                        int opad) {
  const Shape& xs = x->value.shape;
  const Shape& ws = w->value.shape;
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[0])
    throw std::runtime_error("conv2d_transpose: input " + shape_str(xs) + " vs kernel " +
                             shape_str(ws));
  if (opad < 0 || opad >= stride) throw std::runtime_error("conv2d_transpose: bad output pad");
  int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  int Cout = ws[1], kh = ws[2], kw = ws[3];
  if (b->value.size() != Cout) throw std::runtime_error("conv2d_transpose: bias size mismatch");
  int OH = (H - 1) * stride - 2 * pad + kh + opad;
  int OW = (W - 1) * stride - 2 * pad + kw + opad;
  if (OH <= 0 || OW <= 0) throw std::runtime_error("conv2d_transpose: output collapsed");
  int K = Cout * kh * kw;
  long hw = long(H) * W;
  Tensor<T> out({N, Cout, OH, OW});
  std::vector<T> col(long(K) * hw);
  for (int n = 0; n < N; ++n) {
    std::fill(col.begin(), col.end(), T(0));
    detail::gemm_aTb_acc(w->value.data.data(), &x->value[long(n) * Cin * hw], col.data(), Cin, K,
                         (int)hw);
    T* y = &out[long(n) * Cout * OH * OW];
    for (int c = 0; c < Cout; ++c) {
      T bv = b->value[c];
      T* row = y + long(c) * OH * OW;
      for (long i = 0; i < long(OH) * OW; ++i) row[i] = bv;
    }
    detail::col2im_acc(col.data(), Cout, OH, OW, kh, kw, stride, pad, H, W, y);
  }
  auto bp = [N, Cin, H, W, Cout, kh, kw, stride, pad, OH, OW, K, hw](Node<T>& nd) {
    auto &x = nd.inputs[0], &w = nd.inputs[1], &b = nd.inputs[2];
    std::vector<T> dcol(long(K) * hw);
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const T* dy = &nd.grad[long(n) * Cout * OH * OW];
      detail::im2col(dy, Cout, OH, OW, kh, kw, stride, pad, H, W, dcol.data());
      if (x->requires_grad)
        detail::gemm_acc(w->value.data.data(), dcol.data(), &x->grad[long(n) * Cin * hw], Cin, K,
                         (int)hw);
      if (w->requires_grad)
        detail::gemm_abT_acc(&x->value[long(n) * Cin * hw], dcol.data(), w->grad.data.data(), Cin,
                             (int)hw, K);
      if (b->requires_grad)
        for (int c = 0; c < Cout; ++c) {
          T acc = 0;
          const T* row = dy + long(c) * OH * OW;
          for (long i = 0; i < long(OH) * OW; ++i) acc += row[i];
          b->grad[c] += acc;
        }
    }
  };
  return make_node<T>(std::move(out), {x, w, b}, bp);
}

// one fixed 2-D kernel applied to every channel; kernel is a plain tensor (no grad)
template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Tensor<T>& kern, int stride, int pad) {
  const Shape& xs = x->value.shape;
  if (xs.size() != 4 || kern.shape.size() != 2)
    throw std::runtime_error("depthwise_conv2d: input " + shape_str(xs));
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  int kh = kern.shape[0], kw = kern.shape[1];
  int OH = (H + 2 * pad - kh) / stride + 1;
  int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::runtime_error("depthwise_conv2d: output collapsed");
  Tensor<T> out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xp = &x->value[(long(n) * C + c) * H * W];
      T* yp = &out[(long(n) * C + c) * OH * OW];
      for (int oi = 0; oi < OH; ++oi)
        for (int oj = 0; oj < OW; ++oj) {
          T acc = 0;
          for (int ki = 0; ki < kh; ++ki) {
            int ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= H) continue;
            for (int kj = 0; kj < kw; ++kj) {
              int jj = oj * stride - pad + kj;
              if (jj >= 0 && jj < W) acc += xp[long(ii) * W + jj] * kern[long(ki) * kw + kj];
            }
          }
          yp[long(oi) * OW + oj] = acc;
        }
    }
  auto bp = [kern, N, C, H, W, kh, kw, stride, pad, OH, OW](Node<T>& nd) {
    auto& x = nd.inputs[0];
    x->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* gx = &x->grad[(long(n) * C + c) * H * W];
        const T* gy = &nd.grad[(long(n) * C + c) * OH * OW];
        for (int oi = 0; oi < OH; ++oi)
          for (int oj = 0; oj < OW; ++oj) {
            T g = gy[long(oi) * OW + oj];
            for (int ki = 0; ki < kh; ++ki) {
              int ii = oi * stride - pad + ki;
              if (ii < 0 || ii >= H) continue;
              for (int kj = 0; kj < kw; ++kj) {
                int jj = oj * stride - pad + kj;
                if (jj >= 0 && jj < W) gx[long(ii) * W + jj] += g * kern[long(ki) * kw + kj];
              }
            }
          }
      }
  };
  return make_node<T>(std::move(out), {x}, bp);
}

// 2x2 average pool, stride 2 (even sides required)
template <class T>
Var<T> avg_pool2(const Var<T>& x) {
  const Shape& xs = x->value.shape;
  if (xs.size() != 4 || xs[2] % 2 || xs[3] % 2)
    throw std::runtime_error("avg_pool2: needs even NCHW sides, got " + shape_str(xs));
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3], OH = H / 2, OW = W / 2;
  Tensor<T> out({N, C, OH, OW});
  for (long nc = 0; nc < long(N) * C; ++nc) {
    const T* xp = &x->value[nc * H * W];
    T* yp = &out[nc * OH * OW];
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j)
        yp[long(i) * OW + j] =
            (xp[long(2 * i) * W + 2 * j] + xp[long(2 * i) * W + 2 * j + 1] +
             xp[long(2 * i + 1) * W + 2 * j] + xp[long(2 * i + 1) * W + 2 * j + 1]) /
            T(4);
  }
  auto bp = [N, C, H, W, OH, OW](Node<T>& nd) {
    auto& x = nd.inputs[0];
    x->ensure_grad();
    for (long nc = 0; nc < long(N) * C; ++nc) {
      T* gx = &x->grad[nc * H * W];
      const T* gy = &nd.grad[nc * OH * OW];
      for (int i = 0; i < OH; ++i)
        for (int j = 0; j < OW; ++j) {
          T g = gy[long(i) * OW + j] / T(4);
          gx[long(2 * i) * W + 2 * j] += g;
          gx[long(2 * i) * W + 2 * j + 1] += g;
          gx[long(2 * i + 1) * W + 2 * j] += g;
          gx[long(2 * i + 1) * W + 2 * j + 1] += g;
        }
    }
  };
  return make_node<T>(std::move(out), {x}, bp);
}

// spatial crop [N,C,H,W] -> [N,C,h,w] starting at (top,left)
template <class T>
Var<T> crop(const Var<T>& x, int top, int left, int h, int w) {
  const Shape& xs = x->value.shape;
  if (xs.size() != 4 || top < 0 || left < 0 || top + h > xs[2] || left + w > xs[3])
    throw std::runtime_error("crop: window out of bounds on " + shape_str(xs));
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  Tensor<T> out({N, C, h, w});
  for (long nc = 0; nc < long(N) * C; ++nc)
    for (int i = 0; i < h; ++i)
      std::copy_n(&x->value[nc * H * W + long(top + i) * W + left], w,
                  &out[nc * h * w + long(i) * w]);
  auto bp = [N, C, H, W, top, left, h, w](Node<T>& nd) {
    auto& x = nd.inputs[0];
    x->ensure_grad();
    for (long nc = 0; nc < long(N) * C; ++nc)
      for (int i = 0; i < h; ++i) {
        const T* g = &nd.grad[nc * h * w + long(i) * w];
        T* p = &x->grad[nc * H * W + long(top + i) * W + left];
        for (int j = 0; j < w; ++j) p[j] += g[j];
      }
  };
  return make_node<T>(std::move(out), {x}, bp);
}

// bilinear resize with half-pixel centers; exact identity when sizes match
template <class T>
Var<T> resize_bilinear(const Var<T>& x, int oh, int ow) {
  const Shape& xs = x->value.shape;
  if (xs.size() != 4 || oh <= 0 || ow <= 0)
    throw std::runtime_error("resize_bilinear: bad request on " + shape_str(xs));
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (oh == H && ow == W) return reshape(x, xs);  // identity map
  struct Tap {
    int i0, i1;
    T w0, w1;
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(out);
    double scale = double(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      if (src > in - 1) src = in - 1;
      int i0 = (int)std::floor(src);
      int i1 = std::min(i0 + 1, in - 1);
      T f = T(src - i0);
      taps[o] = {i0, i1, T(1) - f, f};
    }
    return taps;
  };
  auto rt = make_taps(H, oh), ct = make_taps(W, ow);
  Tensor<T> out({N, C, oh, ow});
  for (long nc = 0; nc < long(N) * C; ++nc) {
    const T* xp = &x->value[nc * H * W];
    T* yp = &out[nc * oh * ow];
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const Tap &r = rt[i], &c = ct[j];
        yp[long(i) * ow + j] = r.w0 * (c.w0 * xp[long(r.i0) * W + c.i0] +
                                       c.w1 * xp[long(r.i0) * W + c.i1]) +
                               r.w1 * (c.w0 * xp[long(r.i1) * W + c.i0] +
                                       c.w1 * xp[long(r.i1) * W + c.i1]);
      }
  }
  auto bp = [rt, ct, N, C, H, W, oh, ow](Node<T>& nd) {
    auto& x = nd.inputs[0];
    x->ensure_grad();
    for (long nc = 0; nc < long(N) * C; ++nc) {
      T* gx = &x->grad[nc * H * W];
      const T* gy = &nd.grad[nc * oh * ow];
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const Tap &r = rt[i], &c = ct[j];
          T g = gy[long(i) * ow + j];
          gx[long(r.i0) * W + c.i0] += g * r.w0 * c.w0;
          gx[long(r.i0) * W + c.i1] += g * r.w0 * c.w1;
          gx[long(r.i1) * W + c.i0] += g * r.w1 * c.w0;
          gx[long(r.i1) * W + c.i1] += g * r.w1 * c.w1;
        }
    }
  };
  return make_node<T>(std::move(out), {x}, bp);
}

}  // namespace ipc
