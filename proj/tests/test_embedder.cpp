#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ipc/embedder.hpp"
#include "ipc/finite_diff.hpp"
#include "ipc/loss.hpp"
#include "ipc/toyfaces.hpp"

using namespace ipc;

namespace {
Tensor<double> random_image(int n, int side, Rng& rng) {
  Tensor<double> t({n, 3, side, side});
  for (auto& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

double cosine_distance(const Tensor<float>& a, const Tensor<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (long i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}
}  // namespace

TEST_CASE("align: exact-fit crop is the identity resize") {
  Rng rng(1);
  auto x = make_input(random_image(1, 64, rng));
  auto a = align(x, {0.5, 32});
  CHECK(a->value.shape == Shape{1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j)
        CHECK(a->value.at4(0, c, i, j) == x->value.at4(0, c, i + 16, j + 16));
}

TEST_CASE("align: f=1 with matching side is the identity map") {
  Rng rng(2);
  auto x = make_input(random_image(1, 40, rng));
  auto a = align(x, {1.0, 40});
  CHECK(a->value.data == x->value.data);
  auto again = align(a, {1.0, 40});
  CHECK(again->value.data == a->value.data);
}

TEST_CASE("align: pixels outside the crop window get zero gradient") {
  Rng rng(3);
  auto x = make_input(random_image(1, 64, rng), true);
  backward(sum(align(x, {0.5, 32})));
  CHECK(x->grad[0] == 0.0);                             // corner, outside
  CHECK(x->grad.at4(0, 0, 32, 32) != 0.0);              // center, inside
}

TEST_CASE("align: bad crop fraction rejected") {
  Rng rng(4);
  auto x = make_input(random_image(1, 32, rng));
  CHECK_THROWS_AS(align(x, {0.0, 32}), std::runtime_error);
  CHECK_THROWS_AS(align(x, {1.5, 32}), std::runtime_error);
}

TEST_CASE("embed: shape, determinism, and identical-input identity loss") {
  auto emb = make_embedder<double>(EmbedderMode::SeededRandom, 11);
  Rng rng(5);
  auto x = random_image(2, 32, rng);
  auto e1 = emb.embed(make_input(x));
  auto e2 = emb.embed(make_input(x));
  CHECK(e1->value.shape == Shape{2, 64});
  CHECK(e1->value.data == e2->value.data);
  CHECK(loss_id(e1, e2)->value[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("embed: wrong input side rejected") {
  auto emb = make_embedder<double>(EmbedderMode::SeededRandom, 11);
  Rng rng(6);
  CHECK_THROWS_AS(emb.embed(make_input(random_image(1, 16, rng))), std::runtime_error);
}

TEST_CASE("seeded-random construction is reproducible and seed-sensitive") {
  auto a = make_embedder<float>(EmbedderMode::SeededRandom, 7);
  auto b = make_embedder<float>(EmbedderMode::SeededRandom, 7);
  auto c = make_embedder<float>(EmbedderMode::SeededRandom, 8);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.content_hash() != c.content_hash());
  CHECK(a.frozen());
}

TEST_CASE("frozen trunk: no parameter gradients, input gradients intact") {
  auto emb = make_embedder<double>(EmbedderMode::SeededRandom, 9);
  Rng rng(7);
  auto x = make_input(random_image(1, 64, rng), true);
  backward(sum(emb.embed(align(x, {}))));
  for (auto& [name, p] : emb.params()) {
    CHECK_FALSE(p->requires_grad);
    CHECK(p->grad.size() == 0);
  }
  double gmag = 0;
  for (long i = 0; i < x->grad.size(); ++i) gmag += std::abs(x->grad[i]);
  CHECK(gmag > 0);
}

TEST_CASE("identity loss through aligner and trunk matches finite differences") {
  auto emb = make_embedder<double>(EmbedderMode::SeededRandom, 13);
  Rng rng(8);
  auto xr = random_image(1, 64, rng);
  auto xh = random_image(1, 64, rng);
  AlignerConfig cfg;
  auto e_ref = emb.embed(align(make_input(xr), cfg));

  auto x = make_input(xh, true);
  backward(loss_id(e_ref, emb.embed(align(x, cfg))));

  std::vector<long> idx;
  for (int k = 0; k < 12; ++k) idx.push_back(rng.below((uint64_t)xh.size()));
  auto f = [&](const Tensor<double>& p) {
    return loss_id(e_ref, emb.embed(align(make_input(p), cfg)))->value[0];
  };
  auto fd = finite_diff_grad_at<double>(f, xh, 1e-5, idx);
  std::vector<double> bp;
  for (long i : idx) bp.push_back(x->grad[i]);
  CHECK(max_rel_err(bp, fd) < 1e-4);
}

TEST_CASE("pretraining hits the held-out accuracy bar and separates identities") {
  auto ds = generate_toyfaces(41, 2, 1, 64, 20, 16);
  auto emb = make_embedder<float>(EmbedderMode::Pretrained, 21, {}, {}, ds.embedder_split);
  CHECK(emb.provenance == "pretrained");
  CHECK(emb.frozen());

  // held-out images (the ones pretraining never fit on): every 4th per identity
  std::vector<std::pair<Tensor<float>, int>> held;
  std::map<int, int> seen;
  for (const auto& li : ds.embedder_split)
    if (seen[li.identity]++ % 4 == 3) {
      Tensor<float> b({1, 3, 64, 64});
      b.data = li.image.data;
      auto e = emb.embed(align(make_input(std::move(b)), AlignerConfig{}));
      Tensor<float> ev({64});
      ev.data.assign(e->value.data.begin(), e->value.data.end());
      held.emplace_back(std::move(ev), li.identity);
    }
  double same = 0, cross = 0;
  long ns = 0, nc = 0;
  for (size_t i = 0; i < held.size(); ++i)
    for (size_t j = i + 1; j < held.size(); ++j) {
      double d = cosine_distance(held[i].first, held[j].first);
      if (held[i].second == held[j].second) {
        same += d;
        ++ns;
      } else {
        cross += d;
        ++nc;
      }
    }
  REQUIRE(ns > 0);
  REQUIRE(nc > 0);
  CHECK(same / ns < cross / nc);
}

TEST_CASE("pretraining refuses identity overlap with the codec sets") {
  auto ds = generate_toyfaces(42, 2, 1, 64, 4, 8);
  std::set<int> codec_ids = {ds.embedder_split.front().identity};
  CHECK_THROWS_WITH_AS(
      make_embedder<float>(EmbedderMode::Pretrained, 3, {}, {}, ds.embedder_split, codec_ids),
      doctest::Contains("both"), std::runtime_error);
}

TEST_CASE("embedder file round-trips parameters and aligner settings") {
  auto emb = make_embedder<float>(EmbedderMode::SeededRandom, 77);
  AlignerConfig cfg{0.6, 32};
  std::string path = "embedder_roundtrip.ipce";
  save_embedder(path, emb, cfg);
  auto [back, cfg2] = load_embedder<float>(path);
  CHECK(back.content_hash() == emb.content_hash());
  CHECK(back.provenance == emb.provenance);
  CHECK(back.seed == 77);
  CHECK(cfg2.crop_fraction == doctest::Approx(0.6));
  CHECK(cfg2.out_size == 32);
  CHECK(back.frozen());
  std::remove(path.c_str());
}
