#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "ipc/compress.hpp"
#include "ipc/evaluation.hpp"
#include "ipc/gradcheck.hpp"
#include "ipc/toyfaces.hpp"
#include "ipc/training.hpp"

using namespace ipc;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int n, const char* name, bool ok) {
  std::printf("criterion %d (%s): %s\n", n, name, ok ? "pass" : "FAIL");
  std::fflush(stdout);
}

std::string tmp_path(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / "codec_acceptance";
  std::filesystem::create_directories(dir);
  return (dir / leaf).string();
}

ArchDescriptor small_arch() {
  ArchDescriptor a;
  a.hidden = 8;
  a.latent_channels = 8;
  a.hyper_channels = 4;
  return a;
}

TrainConfig base_config(RecKind kind, double lambda_rate, double lambda_id, int steps) {
  TrainConfig cfg;
  cfg.weights.kind = kind;
  cfg.weights.lambda_rate = lambda_rate;
  cfg.weights.lambda_id = lambda_id;
  cfg.batch_size = 8;
  cfg.steps = steps;
  cfg.seed = 3;
  cfg.arch = small_arch();
  return cfg;
}

std::vector<Tensor<float>> images_of(const std::vector<LabeledImage>& set) {
  std::vector<Tensor<float>> out;
  for (const auto& li : set) out.push_back(li.image);
  return out;
}

// rate estimate the way the training loop sees it: continuous likelihoods on
// noise-quantized latents, sigma conditioned on the rounded hyper-latent
double noise_rate_estimate(const CodecModel<float>& model, const Tensor<float>& img, Rng& rng) {
  auto padded = pad_to_multiple(img, 8);
  Tensor<float> t({1, padded.shape[0], padded.shape[1], padded.shape[2]});
  t.data = padded.data;
  auto x = make_input(std::move(t));
  auto y = model.codec.encode(x);
  auto z = model.codec.hyper_encode(y);
  auto sigma = model.codec.hyper_decode(quantize_ste(z));
  if (sigma->value.shape != y->value.shape)
    sigma = crop(sigma, 0, 0, y->value.shape[2], y->value.shape[3]);
  auto y_tilde = quantize(y, QuantizeMode::AdditiveNoise, &rng);
  auto z_tilde = quantize(z, QuantizeMode::AdditiveNoise, &rng);
  return loss_rate(likelihood_gaussian(y_tilde, sigma),
                   likelihood_factorized(z_tilde, model.prior))
      ->value[0];
}

// exhaustive-threshold reference for FRR@FAR: try every finite candidate plus
// -inf, recompute both error rates from scratch each time
FrrResult brute_force_frr(const std::vector<QueryRecord>& records, double far_target) {
  std::vector<double> cand{-std::numeric_limits<double>::infinity()};
  for (const auto& r : records) {
    cand.push_back(r.same_distance);
    cand.push_back(r.notsame_distance);
  }
  FrrResult best{1.0, -std::numeric_limits<double>::infinity()};
  for (double t : cand) {
    long fa = 0, fr = 0;
    for (const auto& r : records) {
      fa += r.notsame_distance <= t;
      fr += r.same_distance > t;
    }
    double far = double(fa) / records.size();
    if (far <= far_target && t >= best.threshold) best = {double(fr) / records.size(), t};
  }
  return best;
}

// ---- direct-formula MS-SSIM reference: plain loops, no autodiff ----

struct Img {
  int c, h, w;
  std::vector<double> d;
  double at(int ch, int i, int j) const { return d[(size_t(ch) * h + i) * w + j]; }
};

std::vector<double> ref_gauss(int size, double sigma) {
  std::vector<double> k(size_t(size) * size);
  int c = size / 2;
  double tot = 0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double d2 = double(i - c) * (i - c) + double(j - c) * (j - c);
      k[size_t(i) * size + j] = std::exp(-d2 / (2 * sigma * sigma));
      tot += k[size_t(i) * size + j];
    }
  for (auto& v : k) v /= tot;
  return k;
}

Img ref_blur(const Img& x, const std::vector<double>& k, int ks) {
  Img o{x.c, x.h - ks + 1, x.w - ks + 1, {}};
  o.d.resize(size_t(o.c) * o.h * o.w);
  for (int c = 0; c < x.c; ++c)
    for (int i = 0; i < o.h; ++i)
      for (int j = 0; j < o.w; ++j) {
        double acc = 0;
        for (int a = 0; a < ks; ++a)
          for (int b = 0; b < ks; ++b) acc += x.at(c, i + a, j + b) * k[size_t(a) * ks + b];
        o.d[(size_t(c) * o.h + i) * o.w + j] = acc;
      }
  return o;
}

Img ref_mul(const Img& a, const Img& b) {
  Img o = a;
  for (size_t i = 0; i < o.d.size(); ++i) o.d[i] = a.d[i] * b.d[i];
  return o;
}

Img ref_half(const Img& x) {
  Img o{x.c, x.h / 2, x.w / 2, {}};
  o.d.resize(size_t(o.c) * o.h * o.w);
  for (int c = 0; c < x.c; ++c)
    for (int i = 0; i < o.h; ++i)
      for (int j = 0; j < o.w; ++j)
        o.d[(size_t(c) * o.h + i) * o.w + j] =
            (x.at(c, 2 * i, 2 * j) + x.at(c, 2 * i, 2 * j + 1) + x.at(c, 2 * i + 1, 2 * j) +
             x.at(c, 2 * i + 1, 2 * j + 1)) /
            4.0;
  return o;
}

double ref_msssim(Img x, Img y, int scales) {
  const double std5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  std::vector<double> w(std5 + (5 - scales), std5 + 5);
  double wt = 0;
  for (double v : w) wt += v;
  for (double& v : w) v /= wt;
  auto k = ref_gauss(11, 1.5);
  double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double result = 1.0;
  for (int sc = 0; sc < scales; ++sc) {
    Img mx = ref_blur(x, k, 11), my = ref_blur(y, k, 11);
    Img sxx = ref_blur(ref_mul(x, x), k, 11);
    Img syy = ref_blur(ref_mul(y, y), k, 11);
    Img sxy = ref_blur(ref_mul(x, y), k, 11);
    double cs_mean = 0, ssim_mean = 0;
    long n = (long)mx.d.size();
    for (long i = 0; i < n; ++i) {
      double vx = sxx.d[i] - mx.d[i] * mx.d[i];
      double vy = syy.d[i] - my.d[i] * my.d[i];
      double vxy = sxy.d[i] - mx.d[i] * my.d[i];
      double cs = (2 * vxy + c2) / (vx + vy + c2);
      double l = (2 * mx.d[i] * my.d[i] + c1) / (mx.d[i] * mx.d[i] + my.d[i] * my.d[i] + c1);
      cs_mean += cs;
      ssim_mean += l * cs;
    }
    cs_mean /= n;
    ssim_mean /= n;
    double score = (sc + 1 == scales) ? ssim_mean : cs_mean;
    result *= std::pow(std::max(score, 1e-6), w[sc]);
    x = ref_half(x);
    y = ref_half(y);
  }
  return result;
}

// trained artifacts shared across criteria (built once, in doctest order)
struct Trained {
  ToyDataset faces;               // 32x32, 8 codec identities + embedder split
  EmbedderParams<float> embedder; // pretrained, identity-disjoint
  AlignerConfig aligner;
  CodecModel<float> rec, ipr, ip;
  EvalReport rep_rec, rep_ipr, rep_ip;
  bool ready = false;
};
Trained g;

}  // namespace

TEST_CASE("criterion 1: gradient suite") {
  auto t0 = std::chrono::steady_clock::now();
  auto results = run_gradcheck(1234, 10, 1e-4);
  double secs = seconds_since(t0);
  bool ok = results.size() >= 40 && secs <= 120.0;
  for (const auto& r : results) {
    CHECK_MESSAGE(r.pass, r.name, " max_rel_err=", r.max_rel_err);
    ok = ok && r.pass;
  }
  CHECK(secs <= 120.0);
  report(1, "gradient suite vs finite differences", ok);
}

TEST_CASE("criterion 2: lossless coding within cross-entropy budget") {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(505);
  GaussianScaleTable scales;
  bool ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    // random scale -> coder table; draw symbols from its own quantized pmf
    double sigma = std::exp(rng.uniform(std::log(0.11), std::log(64.0)));
    PMFTable table = build_gaussian_table(sigma);
    int n = 64 + (int)rng.below(448);
    std::vector<int32_t> symbols;
    double entropy_bits = 0;
    for (int i = 0; i < n; ++i) {
      uint32_t u = (uint32_t)rng.below(PMFTable::kTotal);
      auto it = std::upper_bound(table.cum.begin(), table.cum.end(), u);
      int32_t s = table.lo + int32_t(it - table.cum.begin()) - 1;
      symbols.push_back(s);
      entropy_bits -= std::log2(double(table.freq(s)) / PMFTable::kTotal);
    }
    std::vector<const PMFTable*> tabs(symbols.size(), &table);
    auto bytes = ec_encode(symbols, tabs);
    auto back = ec_decode(bytes, tabs);
    ok = ok && back == symbols;
    double budget = entropy_bits / 8.0;
    ok = ok && double(bytes.size()) <= std::ceil(budget * 1.001) + 4.0;
    if (!ok) {
      CHECK_MESSAGE(false, "trial ", trial, " sigma=", sigma, " bytes=", bytes.size(),
                    " budget=", budget);
      break;
    }
  }
  double secs = seconds_since(t0);
  CHECK(ok);
  CHECK(secs <= 10.0);
  report(2, "lossless coding within cross-entropy budget", ok && secs <= 10.0);
  (void)scales;
}

TEST_CASE("criterion 3: coded bits track the rate estimate") {
  // 64x64 faces at a rate high enough that coder flush overhead amortizes
  auto faces = generate_toyfaces(11, 8, 32, 64);
  auto cfg = base_config(RecKind::L2, 1e-6, 0.0, 3000);
  auto res = train(cfg, images_of(faces.train));
  auto tables = build_pmf_tables(res.model.prior, res.model.arch().sigma_min);

  Rng rng(77);
  double rel_sum = 0, psnr_sum = 0;
  int n = 0;
  for (const auto& li : faces.test) {
    double est = noise_rate_estimate(res.model, li.image, rng);
    CompressStats st;
    auto container = compress_image(res.model, tables, li.image, &st);
    auto recon = decompress_image(res.model, tables, container);
    double payload_bits = 8.0 * (st.z_payload_bytes + st.y_payload_bytes);
    rel_sum += std::abs(payload_bits - est) / est;
    psnr_sum += psnr(li.image, recon);
    if (++n >= 64) break;
  }
  double mean_rel = rel_sum / n, mean_psnr = psnr_sum / n;
  std::printf("  rate fidelity: n=%d mean_rel=%.4f mean_psnr=%.2f dB\n", n, mean_rel, mean_psnr);
  CHECK(n == 64);
  CHECK(mean_rel <= 0.05);
  CHECK(mean_psnr > 20.0);  // decode(encode-then-round) quality on held-out faces
  report(3, "coded payload bits within 5% of rate estimate", n == 64 && mean_rel <= 0.05);
}

TEST_CASE("criterion 4: rate/quality/recognition trade-off ordering") {
  auto t0 = std::chrono::steady_clock::now();
  g.faces = generate_toyfaces(11, 8, 32, 32, 24, 16);
  std::set<int> codec_ids;
  for (const auto& li : g.faces.train) codec_ids.insert(li.identity);
  for (const auto& li : g.faces.test) codec_ids.insert(li.identity);
  g.embedder = make_embedder<float>(EmbedderMode::Pretrained, 9, g.aligner, {},
                                    g.faces.embedder_split, codec_ids);

  auto images = images_of(g.faces.train);
  auto rec_cfg = base_config(RecKind::L2, 1e-5, 0.0, 3000);
  auto rec = train(rec_cfg, images);
  std::string rec_path = tmp_path("rec.ipck");
  save_checkpoint(rec_path, rec.model, rec.opt, rec.step, "");

  auto ipr_cfg = base_config(RecKind::L2, 1e-5, 1.0, 1200);
  ipr_cfg.warm_start_path = rec_path;
  auto ipr = train(ipr_cfg, images, &g.embedder, g.aligner);

  auto ip_cfg = base_config(RecKind::None, 1e-5, 1.0, 3000);
  ip_cfg.warm_start_path = rec_path;
  auto ip = train(ip_cfg, images, &g.embedder, g.aligner);

  g.rep_rec = evaluate_model(rec.model, g.embedder, g.aligner, g.faces.test, 2, 0.10);
  g.rep_ipr = evaluate_model(ipr.model, g.embedder, g.aligner, g.faces.test, 2, 0.10);
  g.rep_ip = evaluate_model(ip.model, g.embedder, g.aligner, g.faces.test, 2, 0.10);
  g.rec = std::move(rec.model);
  g.ipr = std::move(ipr.model);
  g.ip = std::move(ip.model);
  g.ready = true;

  double secs = seconds_since(t0);
  std::printf("  REC: psnr=%.2f l_id=%.4f frr=%.3f bpp=%.3f\n", g.rep_rec.psnr_db_mean,
              g.rep_rec.l_id_mean, g.rep_rec.frr_at_far, g.rep_rec.bpp_mean);
  std::printf("  IPR: psnr=%.2f l_id=%.4f frr=%.3f bpp=%.3f\n", g.rep_ipr.psnr_db_mean,
              g.rep_ipr.l_id_mean, g.rep_ipr.frr_at_far, g.rep_ipr.bpp_mean);
  std::printf("  IP:  psnr=%.2f l_id=%.4f frr=%.3f bpp=%.3f (%.0fs)\n", g.rep_ip.psnr_db_mean,
              g.rep_ip.l_id_mean, g.rep_ip.frr_at_far, g.rep_ip.bpp_mean, secs);

  bool psnr_order = g.rep_rec.psnr_db_mean >= g.rep_ipr.psnr_db_mean &&
                    g.rep_ipr.psnr_db_mean >= g.rep_ip.psnr_db_mean;
  bool psnr_gap = g.rep_rec.psnr_db_mean - g.rep_ip.psnr_db_mean >= 2.0;
  bool id_order = g.rep_ip.l_id_mean <= g.rep_ipr.l_id_mean &&
                  g.rep_ipr.l_id_mean <= g.rep_rec.l_id_mean;
  bool frr_order = g.rep_ipr.frr_at_far <= g.rep_rec.frr_at_far;
  CHECK(psnr_order);
  CHECK(psnr_gap);
  CHECK(id_order);
  CHECK(frr_order);
  CHECK(secs <= 1200.0);
  report(4, "REC/IPR/IP trade-off ordering",
         psnr_order && psnr_gap && id_order && frr_order && secs <= 1200.0);
}

TEST_CASE("criterion 5: verification protocol matches brute force") {
  Rng rng(808);
  std::vector<QueryRecord> records;
  for (int i = 0; i < 200; ++i) {
    QueryRecord r;
    r.query_index = i;
    r.identity = (int)rng.below(20);
    r.same_distance = rng.uniform(0.0, 1.0);
    r.notsame_distance = rng.uniform(0.0, 1.0);
    records.push_back(r);
  }
  bool ok = true;
  for (double target : {0.01, 0.05, 0.1, 0.25, 0.5}) {
    auto fast = frr_at_far(records, target);
    auto slow = brute_force_frr(records, target);
    CHECK(fast.frr == slow.frr);
    CHECK(fast.threshold == slow.threshold);
    ok = ok && fast.frr == slow.frr && fast.threshold == slow.threshold;
  }

  // match_distances vs a pairwise scan over raw embeddings
  int dim = 8, n_gal = 30, n_query = 50;
  std::vector<Tensor<float>> gal, query;
  std::vector<int> gal_ids, query_ids;
  auto rand_emb = [&] {
    Tensor<float> e({dim});
    for (auto& v : e.data) v = (float)rng.uniform(-1.0, 1.0);
    return e;
  };
  for (int i = 0; i < n_gal; ++i) {
    gal.push_back(rand_emb());
    gal_ids.push_back(i % 10);
  }
  for (int i = 0; i < n_query; ++i) {
    query.push_back(rand_emb());
    query_ids.push_back((int)rng.below(10));
  }
  auto records2 = match_distances(query, query_ids, gal, gal_ids);
  for (int q = 0; q < n_query; ++q) {
    double same = std::numeric_limits<double>::infinity();
    double notsame = std::numeric_limits<double>::infinity();
    for (int gi = 0; gi < n_gal; ++gi) {
      double d = cosine_distance(query[q], gal[gi]);
      if (gal_ids[gi] == query_ids[q])
        same = std::min(same, d);
      else
        notsame = std::min(notsame, d);
    }
    ok = ok && records2[q].same_distance == same && records2[q].notsame_distance == notsame;
    CHECK(records2[q].same_distance == same);
    CHECK(records2[q].notsame_distance == notsame);
  }
  report(5, "FRR@FAR and match distances equal brute force", ok);
}

TEST_CASE("criterion 6: metric oracles") {
  bool ok = true;
  Rng rng(606);
  for (int pair = 0; pair < 10; ++pair) {
    Tensor<float> a({3, 64, 64}), b({3, 64, 64});
    for (long i = 0; i < a.size(); ++i) {
      a[i] = (float)rng.uniform(0.0, 1.0);
      b[i] = std::clamp(a[i] + (float)rng.uniform(-0.3, 0.3), 0.0f, 1.0f);
    }
    Img ia{3, 64, 64, {}}, ib{3, 64, 64, {}};
    ia.d.assign(a.data.begin(), a.data.end());
    ib.d.assign(b.data.begin(), b.data.end());
    double got = msssim_metric(a, b), want = ref_msssim(ia, ib, 3);
    CHECK(got == doctest::Approx(want).epsilon(0).scale(0).epsilon(1e-6));
    ok = ok && std::abs(got - want) <= 1e-6;
  }
  Tensor<float> same({3, 64, 64});
  for (auto& v : same.data) v = (float)rng.uniform(0.0, 1.0);
  ok = ok && msssim_metric(same, same) == doctest::Approx(1.0).epsilon(1e-12);
  CHECK(msssim_metric(same, same) == doctest::Approx(1.0).epsilon(1e-12));

  // PSNR closed forms: full-range error -> 0 dB; MSE = 255^2/100 -> 20 dB
  Tensor<float> black({3, 10, 10}), white({3, 10, 10});
  for (auto& v : white.data) v = 1.0f;
  ok = ok && std::abs(psnr(black, white) - 0.0) <= 1e-9;
  CHECK(psnr(black, white) == doctest::Approx(0.0).epsilon(1e-9));
  Tensor<float> three = black;
  three[0] = three[1] = three[2] = 1.0f;
  ok = ok && std::abs(psnr(black, three) - 20.0) <= 1e-9;
  CHECK(psnr(black, three) == doctest::Approx(20.0).epsilon(1e-9));

  ok = ok && bpp(76250, 250, 250) == 9.76;
  CHECK(bpp(76250, 250, 250) == 9.76);
  report(6, "MS-SSIM/PSNR/BPP against closed forms", ok);
}

TEST_CASE("criterion 7: unseen embedder, no gradients into embedders") {
  REQUIRE(g.ready);
  auto embedder_b = make_embedder<float>(EmbedderMode::SeededRandom, 4242);
  auto rep_b = evaluate_model(g.ipr, embedder_b, {}, g.faces.test, 2, 0.10);
  std::printf("  embedder-B report: frr=%.3f ceiling=%.3f l_id=%.4f\n", rep_b.frr_at_far,
              rep_b.frr_ceiling, rep_b.l_id_mean);
  bool ok = rep_b.frr_at_far >= 0.0 && rep_b.frr_at_far <= 1.0 && rep_b.n_queries > 0;
  CHECK(ok);

  // structural: a full training step's backward pass leaves both embedders
  // without gradients or gradient-requiring parameters
  Tensor<float> x4({1, 3, 32, 32});
  x4.data = g.faces.train[0].image.data;
  Rng rng(9);
  auto losses = training_losses(g.ipr, make_input(std::move(x4)),
                                {1e-5, 1.0, RecKind::L2}, &g.embedder, g.aligner, rng);
  backward(losses.total);
  for (const auto* emb : {&g.embedder, &embedder_b})
    for (const auto& [name, p] : emb->params()) {
      ok = ok && !p->requires_grad && p->grad.empty();
      CHECK_FALSE(p->requires_grad);
      CHECK(p->grad.empty());
    }
  report(7, "unseen embedder evaluates; embedders receive no gradients", ok);
}

TEST_CASE("criterion 8: determinism of training and coding") {
  REQUIRE(g.ready);
  auto faces = generate_toyfaces(21, 2, 8, 32);
  auto cfg = base_config(RecKind::L2, 1e-5, 0.0, 200);
  cfg.seed = 12;
  cfg.batch_size = 4;
  auto images = images_of(faces.train);
  auto a = train(cfg, images);
  auto b = train(cfg, images);
  bool ok = a.model.content_hash() == b.model.content_hash();
  CHECK(a.model.content_hash() == b.model.content_hash());

  auto tables_a = build_pmf_tables(a.model.prior, a.model.arch().sigma_min);
  auto tables_b = build_pmf_tables(b.model.prior, b.model.arch().sigma_min);
  for (const auto& li : faces.test) {
    auto bits1 = compress_image(a.model, tables_a, li.image);
    auto bits2 = compress_image(a.model, tables_a, li.image);
    auto bits3 = compress_image(b.model, tables_b, li.image);
    ok = ok && bits1 == bits2 && bits1 == bits3;
    CHECK(bits1 == bits2);
    CHECK(bits1 == bits3);
  }
  report(8, "identical seed and config reproduce hashes and bitstreams", ok);
}
