#pragma once

#include "ipc/arch.hpp"
#include "ipc/autodiff.hpp"
#include "ipc/range_coder.hpp"

namespace ipc {

inline constexpr double kLikelihoodFloor = 1e-9;
inline constexpr double kTailMass = 1e-9;

// Per-channel monotone CDF network, widths 1 -> 3 -> 3 -> 1. Affine weights are
// kept positive through softplus reparameterization; hidden layers apply the
// gated residual h + tanh(a) * tanh(h) (monotone for any a); output is squashed
// by a sigmoid. At init the whole network collapses to the standard logistic
// CDF: c(v) = sigmoid(v).
template <class T>
struct FactorizedPrior {
  static constexpr int kWidth = 3;
  int channels = 0;
  // per channel: w1 [3], b1 [3], a1 [3], w2 [3x3], b2 [3], a2 [3], w3 [3], b3 [1]
  std::vector<Var<T>> w1, b1, a1, w2, b2, a2, w3, b3;

  static T softplus_inv(T y) { return std::log(std::expm1(y)); }

  static FactorizedPrior init(int channels) {
    FactorizedPrior p;
    p.channels = channels;
    T w1v = softplus_inv(T(1));
    T wv = softplus_inv(T(1) / T(kWidth));
    for (int c = 0; c < channels; ++c) {
      p.w1.push_back(make_param(Tensor<T>::full({kWidth}, w1v)));
      p.b1.push_back(make_param(Tensor<T>::zeros({kWidth})));
      p.a1.push_back(make_param(Tensor<T>::zeros({kWidth})));
      p.w2.push_back(make_param(Tensor<T>::full({kWidth, kWidth}, wv)));
      p.b2.push_back(make_param(Tensor<T>::zeros({kWidth})));
      p.a2.push_back(make_param(Tensor<T>::zeros({kWidth})));
      p.w3.push_back(make_param(Tensor<T>::full({kWidth}, wv)));
      p.b3.push_back(make_param(Tensor<T>::zeros({1})));
    }
    return p;
  }

  // elementwise CDF of channel ch applied to v (any shape)
  Var<T> cdf(const Var<T>& v, int ch) const {
    std::vector<Var<T>> h(kWidth);
    for (int j = 0; j < kWidth; ++j) {
      h[j] = badd(bmul(v, softplus(elem(w1[ch], j))), elem(b1[ch], j));
      h[j] = add(h[j], bmul(tanh_(h[j]), tanh_(elem(a1[ch], j))));
    }
    std::vector<Var<T>> h2(kWidth);
    for (int i = 0; i < kWidth; ++i) {
      Var<T> acc;
      for (int j = 0; j < kWidth; ++j) {
        auto term = bmul(h[j], softplus(elem(w2[ch], long(i) * kWidth + j)));
        acc = acc ? add(acc, term) : term;
      }
      h2[i] = badd(acc, elem(b2[ch], i));
      h2[i] = add(h2[i], bmul(tanh_(h2[i]), tanh_(elem(a2[ch], i))));
    }
    Var<T> s;
    for (int j = 0; j < kWidth; ++j) {
      auto term = bmul(h2[j], softplus(elem(w3[ch], j)));
      s = s ? add(s, term) : term;
    }
    return sigmoid(badd(s, elem(b3[ch], 0)));
  }

  std::vector<std::pair<std::string, Var<T>>> params() const {
    std::vector<std::pair<std::string, Var<T>>> out;
    for (int c = 0; c < channels; ++c) {
      std::string pre = "prior.ch" + std::to_string(c) + ".";
      out.emplace_back(pre + "w1", w1[c]);
      out.emplace_back(pre + "b1", b1[c]);
      out.emplace_back(pre + "a1", a1[c]);
      out.emplace_back(pre + "w2", w2[c]);
      out.emplace_back(pre + "b2", b2[c]);
      out.emplace_back(pre + "a2", a2[c]);
      out.emplace_back(pre + "w3", w3[c]);
      out.emplace_back(pre + "b3", b3[c]);
    }
    return out;
  }

  template <class U>
  FactorizedPrior<U> cast() const {
    FactorizedPrior<U> out;
    out.channels = channels;
    auto cp = [](const std::vector<Var<T>>& src, std::vector<Var<U>>& dst) {
      for (const auto& v : src) dst.push_back(make_input(v->value.template cast<U>()));
    };
    cp(w1, out.w1);
    cp(b1, out.b1);
    cp(a1, out.a1);
    cp(w2, out.w2);
    cp(b2, out.b2);
    cp(a2, out.a2);
    cp(w3, out.w3);
    cp(b3, out.b3);
    return out;
  }
};

// p(v) = c(v + 0.5) - c(v - 0.5), per channel, floored before any log
template <class T>
Var<T> likelihood_factorized(const Var<T>& z, const FactorizedPrior<T>& prior) {
  const Shape& s = z->value.shape;
  if (s.size() != 4 || s[1] != prior.channels)
    throw std::runtime_error("likelihood_factorized: input " + shape_str(s) + " vs " +
                             std::to_string(prior.channels) + " channels");
  std::vector<Var<T>> parts;
  for (int c = 0; c < prior.channels; ++c) {
    auto zc = slice_channels(z, c, c + 1);
    auto p = sub(prior.cdf(sadd(zc, T(0.5)), c), prior.cdf(sadd(zc, T(-0.5)), c));
    parts.push_back(lower_bound(p, T(kLikelihoodFloor)));
  }
  return concat_channels(parts);
}

// p(y; sigma) = Phi((y+0.5)/sigma) - Phi((y-0.5)/sigma), zero-mean scale-only
template <class T>
Var<T> likelihood_gaussian(const Var<T>& y, const Var<T>& sigma) {
  require_same_shape(y->value.shape, sigma->value.shape, "likelihood_gaussian");
  auto inv = exp_(neg(log_(sigma)));
  auto p = sub(normal_cdf(mul(sadd(y, T(0.5)), inv)), normal_cdf(mul(sadd(y, T(-0.5)), inv)));
  return lower_bound(p, T(kLikelihoodFloor));
}

// 64 log-spaced scales on [sigma_min, 64]; coding snaps exact scales to the
// nearest entry so encoder and decoder agree bit-exactly.
struct GaussianScaleTable {
  static constexpr int kEntries = 64;
  double sigma_min = 0.11;
  double sigma_max = 64.0;

  double sigma(int i) const {
    double t = double(i) / (kEntries - 1);
    return std::exp(std::log(sigma_min) + t * (std::log(sigma_max) - std::log(sigma_min)));
  }
  int snap_index(double s) const {
    double t = (std::log(std::max(s, sigma_min)) - std::log(sigma_min)) /
               (std::log(sigma_max) - std::log(sigma_min));
    int i = (int)std::lround(t * (kEntries - 1));
    return std::min(std::max(i, 0), kEntries - 1);
  }
};

namespace detail {
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }
}

// zero-centered table for one scale entry
inline PMFTable build_gaussian_table(double sigma) {
  int radius = 0;
  while (detail::std_normal_cdf((-double(radius) - 0.5) / sigma) >= kTailMass / 2) {
    ++radius;
    if (radius > (1 << 14)) throw std::runtime_error("build_gaussian_table: support exceeds 2^15");
  }
  std::vector<double> pmf;
  for (int v = -radius; v <= radius; ++v)
    pmf.push_back(detail::std_normal_cdf((v + 0.5) / sigma) -
                  detail::std_normal_cdf((v - 0.5) / sigma));
  return quantize_pmf(pmf, -radius);
}

// evaluate a double-precision prior CDF at a batch of points (no gradients)
template <class T>
std::vector<double> prior_cdf_values(const FactorizedPrior<T>& prior, int ch,
                                     const std::vector<double>& points) {
  auto dprior = prior.template cast<double>();
  Tensor<double> t({1, 1, 1, (int)points.size()});
  t.data = points;
  auto c = dprior.cdf(make_input(std::move(t)), ch);
  return c->value.data;
}

template <class T>
PMFTable build_factorized_table(const FactorizedPrior<T>& prior, int ch) {
  auto cdf_at = [&](double v) { return prior_cdf_values(prior, ch, {v})[0]; };
  int lo = 0, hi = 0;
  while (cdf_at(lo - 0.5) >= kTailMass / 2) {
    --lo;
    if (-lo > (1 << 14)) throw std::runtime_error("build_factorized_table: support exceeds 2^15");
  }
  while (1.0 - cdf_at(hi + 0.5) >= kTailMass / 2) {
    ++hi;
    if (hi > (1 << 14)) throw std::runtime_error("build_factorized_table: support exceeds 2^15");
  }
  std::vector<double> grid;
  for (int v = lo; v <= hi + 1; ++v) grid.push_back(v - 0.5);
  auto c = prior_cdf_values(prior, ch, grid);
  std::vector<double> pmf;
  for (size_t i = 0; i + 1 < c.size(); ++i) pmf.push_back(std::max(c[i + 1] - c[i], 0.0));
  return quantize_pmf(pmf, lo);
}

struct PMFTableSet {
  std::vector<PMFTable> factorized;  // one per hyper channel
  std::vector<PMFTable> gaussian;    // one per scale-table entry
  GaussianScaleTable scales;
};

template <class T>
PMFTableSet build_pmf_tables(const FactorizedPrior<T>& prior, double sigma_min) {
  PMFTableSet set;
  set.scales.sigma_min = sigma_min;
  for (int c = 0; c < prior.channels; ++c)
    set.factorized.push_back(build_factorized_table(prior, c));
  for (int i = 0; i < GaussianScaleTable::kEntries; ++i)
    set.gaussian.push_back(build_gaussian_table(set.scales.sigma(i)));
  return set;
}

struct ClampResult {
  std::vector<int32_t> symbols;
  long clamped_count = 0;
};

// clamp integer symbols into a table's support, counting the casualties
inline ClampResult clamp_to_support(const std::vector<int32_t>& symbols,
                                    const std::vector<const PMFTable*>& tables) {
  ClampResult r;
  r.symbols.reserve(symbols.size());
  for (size_t i = 0; i < symbols.size(); ++i) {
    int32_t s = symbols[i];
    const PMFTable& t = *tables[i];
    int32_t c = std::min(std::max(s, t.lo), t.hi());
    if (c != s) ++r.clamped_count;
    r.symbols.push_back(c);
  }
  return r;
}

}  // namespace ipc
