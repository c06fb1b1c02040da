#pragma once

#include "ipc/conv_ops.hpp"

namespace ipc {

// 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03 on unit dynamic range.
// At 64x64 only 3 scales fit; the standard 5 scale weights are truncated to the
// last `scales` entries and renormalized.
struct MsssimConfig {
  int window = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  int scales = 3;

  std::vector<double> scale_weights() const {
    static const double std5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    if (scales < 1 || scales > 5) throw std::runtime_error("msssim: scales must be in [1,5]");
    std::vector<double> w(std5 + (5 - scales), std5 + 5);
    double tot = 0;
    for (double v : w) tot += v;
    for (double& v : w) v /= tot;
    return w;
  }
};

template <class T>
Tensor<T> gaussian_window(int size, double sigma) {
  Tensor<T> k({size, size});
  double tot = 0;
  int c = size / 2;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double d2 = double(i - c) * (i - c) + double(j - c) * (j - c);
      double v = std::exp(-d2 / (2 * sigma * sigma));
      k[long(i) * size + j] = T(v);
      tot += v;
    }
  for (auto& v : k.data) v = T(double(v) / tot);
  return k;
}

namespace detail {
// even-crop then 2x average pool
template <class T>
Var<T> half_scale(const Var<T>& x) {
  const Shape& s = x->value.shape;
  int h = s[2] & ~1, w = s[3] & ~1;
  Var<T> c = (h == s[2] && w == s[3]) ? x : crop(x, 0, 0, h, w);
  return avg_pool2(c);
}
}  // namespace detail

// Differentiable multi-scale SSIM in (0,1]; built from the same primitives the
// training graph uses, so its gradient is the exact gradient of the metric.
template <class T>
Var<T> msssim(const Var<T>& x, const Var<T>& y, const MsssimConfig& cfg = {}) {
  require_same_shape(x->value.shape, y->value.shape, "msssim");
  const Shape& s = x->value.shape;
  int min_side = std::min(s[2], s[3]);
  if (min_side < cfg.window * (1 << (cfg.scales - 1)) / 2 || s.size() != 4)
    throw std::runtime_error("msssim: image " + shape_str(s) + " too small for " +
                             std::to_string(cfg.scales) + " scales");
  auto weights = cfg.scale_weights();
  auto win = gaussian_window<T>(cfg.window, cfg.window_sigma);
  T c1 = T(cfg.k1 * cfg.k1), c2 = T(cfg.k2 * cfg.k2);

  Var<T> xs = x, ys = y;
  Var<T> log_acc;
  for (int sc = 0; sc < cfg.scales; ++sc) {
    auto mu_x = depthwise_conv2d(xs, win, 1, 0);
    auto mu_y = depthwise_conv2d(ys, win, 1, 0);
    auto sxx = sub(depthwise_conv2d(mul(xs, xs), win, 1, 0), mul(mu_x, mu_x));
    auto syy = sub(depthwise_conv2d(mul(ys, ys), win, 1, 0), mul(mu_y, mu_y));
    auto sxy = sub(depthwise_conv2d(mul(xs, ys), win, 1, 0), mul(mu_x, mu_y));
    auto cs = div_(sadd(smul(sxy, T(2)), c2), sadd(add(sxx, syy), c2));
    Var<T> score;
    if (sc + 1 == cfg.scales) {
      auto lum = div_(sadd(smul(mul(mu_x, mu_y), T(2)), c1),
                      sadd(add(mul(mu_x, mu_x), mul(mu_y, mu_y)), c1));
      score = mean(mul(lum, cs));
    } else {
      score = mean(cs);
      xs = detail::half_scale(xs);
      ys = detail::half_scale(ys);
    }
    auto term = smul(log_(lower_bound(score, T(1e-6))), T(weights[sc]));
    log_acc = log_acc ? add(log_acc, term) : term;
  }
  return exp_(log_acc);
}

}  // namespace ipc
