#pragma once

#include "ipc/embedder.hpp"
#include "ipc/finite_diff.hpp"
#include "ipc/loss.hpp"

namespace ipc {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

namespace gradcheck_detail {

// random values bounded away from the kinks and rounding boundaries the
// checked ops have (0 for abs/leaky_relu/div, half-integers for likelihoods)
inline Tensor<double> smooth_random(Shape s, Rng& rng, double lo = 0.15, double hi = 0.85) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) {
    v = rng.uniform(lo, hi);
    if (rng.uniform() < 0.5) v = -v;
  }
  return t;
}

inline Tensor<double> positive_random(Shape s, Rng& rng, double lo, double hi) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

struct Runner {
  std::vector<GradCheckResult>& out;
  uint64_t seed;
  int instances;
  double tol;

  // f maps a perturbable tensor to a scalar Var; gradient wrt that tensor is
  // compared against central differences at sampled coordinates
  void check(const std::string& name,
             const std::function<Tensor<double>(Rng&)>& make_point,
             const std::function<Var<double>(const Var<double>&)>& f, int sample = 16) {
    GradCheckResult r{name, 0, true};
    Rng rng(fnv1a64(name.data(), name.size(), seed));
    for (int k = 0; k < instances; ++k) {
      Tensor<double> point = make_point(rng);
      auto x = make_input(point, true);
      backward(f(x));
      std::vector<long> idx;
      if (point.size() <= sample)
        for (long i = 0; i < point.size(); ++i) idx.push_back(i);
      else
        for (int i = 0; i < sample; ++i) idx.push_back(rng.below((uint64_t)point.size()));
      auto fd = finite_diff_grad_at<double>(
          [&](const Tensor<double>& p) { return f(make_input(p))->value[0]; }, point, 1e-5, idx);
      std::vector<double> bp;
      for (long i : idx) bp.push_back(x->grad.empty() ? 0.0 : x->grad[i]);
      r.max_rel_err = std::max(r.max_rel_err, (double)max_rel_err(bp, fd));
    }
    r.pass = r.max_rel_err < tol;
    out.push_back(r);
  }
};

}  // namespace gradcheck_detail

// Finite-difference verification of every primitive and every loss, each on
// `instances` random inputs. 1e-4 relative tolerance at 64-bit.
inline std::vector<GradCheckResult> run_gradcheck(uint64_t seed = 1234, int instances = 10,
                                                  double tol = 1e-4) {
  using namespace gradcheck_detail;
  std::vector<GradCheckResult> results;
  Runner run{results, seed, instances, tol};

  auto flat = [](int n) {
    return [n](Rng& rng) { return smooth_random({n}, rng); };
  };
  auto pos = [](int n, double lo, double hi) {
    return [=](Rng& rng) { return positive_random({n}, rng, lo, hi); };
  };
  auto img = [](int c, int h, int w) {
    return [=](Rng& rng) { return smooth_random({1, c, h, w}, rng); };
  };
  // random but fixed co-tensors per op, derived from the op-independent seed
  Rng aux(seed ^ 0x5eed);
  auto co = [&aux](Shape s, double lo = 0.15, double hi = 0.85) {
    return constant(positive_random(std::move(s), aux, lo, hi));
  };

  // weighted sum makes the incoming gradient non-uniform
  auto wsum = [&](const Var<double>& v) {
    Tensor<double> w(v->value.shape);
    uint64_t h = fnv1a64(w.shape.data(), w.shape.size() * sizeof(int), 77);
    Rng rng(h);
    for (auto& x : w.data) x = rng.uniform(0.5, 1.5);
    return sum(mul(v, constant(std::move(w))));
  };

  run.check("add", flat(12), [&](auto x) { return wsum(add(x, x)); });
  run.check("sub", flat(12), [&](auto x) { return wsum(sub(smul(x, 3.0), x)); });
  run.check("mul", flat(12), [&](auto x) { return wsum(mul(x, sadd(x, 2.0))); });
  run.check("div", pos(12, 0.5, 2.0), [&](auto x) { return wsum(div_(sadd(x, 3.0), x)); });
  run.check("neg_smul_sadd", flat(12), [&](auto x) { return wsum(sadd(smul(neg(x), 1.7), 0.3)); });
  run.check("exp", flat(12), [&](auto x) { return wsum(exp_(x)); });
  run.check("log", pos(12, 0.2, 3.0), [&](auto x) { return wsum(log_(x)); });
  run.check("tanh", flat(12), [&](auto x) { return wsum(tanh_(x)); });
  run.check("sigmoid", flat(12), [&](auto x) { return wsum(sigmoid(x)); });
  run.check("softplus", flat(12), [&](auto x) { return wsum(softplus(x)); });
  run.check("abs", flat(12), [&](auto x) { return wsum(abs_(x)); });
  run.check("leaky_relu", flat(12), [&](auto x) { return wsum(leaky_relu(x, 0.2)); });
  run.check("normal_cdf", flat(12), [&](auto x) { return wsum(normal_cdf(x)); });
  run.check("lower_bound", pos(12, 0.5, 2.0),
            [&](auto x) { return wsum(lower_bound(x, 0.11)); });
  run.check("sum", flat(12), [&](auto x) { return sum(x); });
  run.check("mean", flat(12), [&](auto x) { return mean(x); });
  run.check("dot", flat(12), [&](auto x) { return dot(x, x); });
  run.check("l2_norm", pos(12, 0.3, 1.0), [&](auto x) { return l2_norm(x); });
  run.check("badd_bmul", flat(12), [&](auto x) {
    return wsum(bmul(badd(x, mean(x)), sum(x)));
  });
  run.check("elem", flat(12), [&](auto x) { return mul(elem(x, 3), elem(x, 7)); });

  auto mm_b = co({4, 3});
  run.check("matmul", [](Rng& rng) { return smooth_random({3, 4}, rng); },
            [&](auto x) { return wsum(matmul(x, mm_b)); });
  auto rb = co({5});
  run.check("add_row_bias", [](Rng& rng) { return smooth_random({3, 5}, rng); },
            [&](auto x) { return wsum(add_row_bias(x, rb)); });
  run.check("softmax_xent", [](Rng& rng) { return smooth_random({4, 5}, rng); },
            [&](auto x) { return softmax_xent(x, {0, 2, 4, 1}); });
  run.check("reshape_slice_concat", img(4, 3, 3), [&](auto x) {
    std::vector<Var<double>> parts = {slice_channels(x, 2, 4), slice_channels(x, 0, 2)};
    return wsum(reshape(concat_channels(parts), {4, 9}));
  });

  auto cw = co({3, 2, 3, 3}), cb = co({3});
  run.check("conv2d", img(2, 6, 6), [&](auto x) { return wsum(conv2d(x, cw, cb, 2, 1)); });
  auto tw = co({2, 3, 3, 3}), tb = co({3});
  run.check("conv2d_transpose", img(2, 3, 3),
            [&](auto x) { return wsum(conv2d_transpose(x, tw, tb, 2, 1, 1)); });
  Rng wrng(9);
  auto dwk = positive_random({3, 3}, wrng, 0.05, 0.2);
  run.check("depthwise_conv2d", img(2, 6, 6),
            [&](auto x) { return wsum(depthwise_conv2d(x, dwk, 1, 0)); });
  run.check("avg_pool2", img(2, 6, 6), [&](auto x) { return wsum(avg_pool2(x)); });
  run.check("crop", img(2, 6, 6), [&](auto x) { return wsum(crop(x, 1, 2, 4, 3)); });
  run.check("resize_bilinear_up", img(2, 5, 4),
            [&](auto x) { return wsum(resize_bilinear(x, 8, 9)); });
  run.check("resize_bilinear_down", img(2, 8, 8),
            [&](auto x) { return wsum(resize_bilinear(x, 5, 3)); });
  run.check("spatial_mean", img(3, 4, 4), [&](auto x) { return wsum(spatial_mean(x)); });
  run.check("quantize_noise", flat(12), [&](auto x) {
    Rng qr(4);  // noise is a constant offset: gradient is exactly identity
    return wsum(quantize(x, QuantizeMode::AdditiveNoise, &qr));
  });

  // losses
  auto ref_img = constant(positive_random({1, 3, 8, 8}, aux, 0.2, 0.8));
  run.check("loss_rec_l2", [](Rng& rng) { return positive_random({1, 3, 8, 8}, rng, 0.2, 0.8); },
            [&](auto x) { return loss_rec(ref_img, x, RecKind::L2); });
  auto ref_big = constant(positive_random({1, 3, 64, 64}, aux, 0.2, 0.8));
  run.check("loss_rec_msssim",
            [&](Rng& rng) {
              Tensor<double> t = ref_big->value;
              for (auto& v : t.data) v = std::clamp(v + rng.uniform(-0.1, 0.1), 0.05, 0.95);
              return t;
            },
            [&](auto x) { return loss_rec(ref_big, x, RecKind::MSSSIM); }, 8);

  auto sigma_field = constant(positive_random({1, 2, 4, 4}, aux, 0.3, 2.0));
  run.check("loss_rate_gaussian",
            [](Rng& rng) { return smooth_random({1, 2, 4, 4}, rng, 0.1, 0.35); },
            [&](auto y) {
              auto p = likelihood_gaussian(y, sigma_field);
              return loss_rate(p, p);
            });
  auto y_fixed = constant(positive_random({1, 2, 4, 4}, aux, 0.1, 0.35));
  run.check("loss_rate_gaussian_sigma",
            [](Rng& rng) { return positive_random({1, 2, 4, 4}, rng, 0.3, 2.0); },
            [&](auto s) {
              auto p = likelihood_gaussian(y_fixed, s);
              return loss_rate(p, p);
            });
  FactorizedPrior<double> prior = FactorizedPrior<double>::init(2);
  {
    Rng prng(31);  // move off the logistic-collapse init to a generic prior
    for (auto& [name, p] : prior.params())
      for (auto& v : p->value.data) v += prng.uniform(-0.1, 0.1);
  }
  run.check("loss_rate_factorized",
            [](Rng& rng) { return smooth_random({1, 2, 4, 4}, rng, 0.1, 0.35); },
            [&](auto z) {
              auto p = likelihood_factorized(z, prior);
              return loss_rate(p, p);
            });
  auto id_ref = constant(smooth_random({3, 16}, aux));
  run.check("loss_id", [](Rng& rng) { return smooth_random({3, 16}, rng); },
            [&](auto e) { return loss_id(id_ref, e); });

  auto emb = make_embedder<double>(EmbedderMode::SeededRandom, 99);
  AlignerConfig acfg;
  auto emb_ref = emb.embed(align(constant(positive_random({1, 3, 64, 64}, aux, 0.2, 0.8)), acfg));
  run.check("loss_id_through_embedder",
            [](Rng& rng) { return positive_random({1, 3, 64, 64}, rng, 0.2, 0.8); },
            [&](auto x) { return loss_id(emb_ref, emb.embed(align(x, acfg))); }, 8);

  return results;
}

}  // namespace ipc
