#include "ipc/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "ipc/msssim.hpp"

namespace ipc {

double bpp(size_t coded_bytes, int width, int height) {
  if (width <= 0 || height <= 0) throw std::runtime_error("bpp: zero-pixel image");
  return 8.0 * double(coded_bytes) / (double(width) * height);
}

double psnr(const Tensor<float>& x, const Tensor<float>& x_hat) {
  require_same_shape(x.shape, x_hat.shape, "psnr");
  auto q = [](float v) { return (int)std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f); };
  double se = 0;
  for (long i = 0; i < x.size(); ++i) {
    double d = q(x[i]) - q(x_hat[i]);
    se += d * d;
  }
  double mse = se / x.size();
  if (mse == 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double msssim_metric(const Tensor<float>& x, const Tensor<float>& x_hat) {
  require_same_shape(x.shape, x_hat.shape, "msssim_metric");
  Shape s4 = x.shape.size() == 3 ? Shape{1, x.shape[0], x.shape[1], x.shape[2]} : x.shape;
  Tensor<double> a(s4), b(s4);
  for (long i = 0; i < x.size(); ++i) {
    a[i] = x[i];
    b[i] = x_hat[i];
  }
  // largest scale count (up to 3) whose coarsest level still fits the window
  MsssimConfig cfg;
  int min_side = std::min(s4[2], s4[3]);
  cfg.scales = 0;
  while (cfg.scales < 3 && min_side / (1 << cfg.scales) >= cfg.window) ++cfg.scales;
  if (cfg.scales == 0)
    throw std::runtime_error("msssim_metric: image too small for the 11-tap window");
  return msssim(make_input(std::move(a)), make_input(std::move(b)), cfg)->value[0];
}

double cosine_distance(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a.shape, b.shape, "cosine_distance");
  double dot = 0, na = 0, nb = 0;
  for (long i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw std::runtime_error("cosine_distance: zero-norm embedding");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor<float> embed_image(const EmbedderParams<float>& emb, const AlignerConfig& aligner,
                          const Tensor<float>& img) {
  Tensor<float> x({1, img.shape[0], img.shape[1], img.shape[2]});
  x.data = img.data;
  auto e = emb.embed(align(make_input(std::move(x)), aligner));
  Tensor<float> out({e->value.shape[1]});
  out.data = e->value.data;
  return out;
}

GalleryQuerySplit split_gallery_query(const std::vector<int>& identities, int n, uint64_t seed) {
  if (identities.empty()) throw std::runtime_error("split_gallery_query: empty test split");
  if (n < 1) throw std::runtime_error("split_gallery_query: need n >= 1 gallery images");
  std::map<int, std::vector<int>> by_id;
  for (int i = 0; i < (int)identities.size(); ++i) by_id[identities[i]].push_back(i);
  Rng rng(seed);
  GalleryQuerySplit out;
  for (auto& [id, idx] : by_id) {
    if (seed != 0) rng.shuffle(idx.begin(), idx.end());
    if ((int)idx.size() <= n) {
      out.gallery.insert(out.gallery.end(), idx.begin(), idx.end());
    } else {
      out.gallery.insert(out.gallery.end(), idx.begin(), idx.begin() + n);
      out.query.insert(out.query.end(), idx.begin() + n, idx.end());
    }
  }
  std::sort(out.gallery.begin(), out.gallery.end());
  std::sort(out.query.begin(), out.query.end());
  return out;
}

std::vector<QueryRecord> match_distances(const std::vector<Tensor<float>>& query_emb,
                                         const std::vector<int>& query_ids,
                                         const std::vector<Tensor<float>>& gallery_emb,
                                         const std::vector<int>& gallery_ids) {
  if (query_emb.size() != query_ids.size() || gallery_emb.size() != gallery_ids.size())
    throw std::runtime_error("match_distances: embedding/identity count mismatch");
  std::vector<QueryRecord> records;
  for (size_t q = 0; q < query_emb.size(); ++q) {
    QueryRecord r;
    r.query_index = (int)q;
    r.identity = query_ids[q];
    double same = std::numeric_limits<double>::infinity();
    double notsame = std::numeric_limits<double>::infinity();
    for (size_t g = 0; g < gallery_emb.size(); ++g) {
      double d = cosine_distance(query_emb[q], gallery_emb[g]);
      auto& slot = gallery_ids[g] == r.identity ? same : notsame;
      slot = std::min(slot, d);
    }
    if (!std::isfinite(same))
      throw std::runtime_error("match_distances: query identity " + std::to_string(r.identity) +
                               " absent from gallery");
    if (!std::isfinite(notsame))
      throw std::runtime_error("match_distances: gallery holds no other identity to reject");
    r.same_distance = same;
    r.notsame_distance = notsame;
    records.push_back(r);
  }
  return records;
}

FrrResult frr_at_far(const std::vector<QueryRecord>& records, double far_target) {
  if (records.empty()) throw std::runtime_error("frr_at_far: no query records");
  if (!(far_target > 0 && far_target < 1))
    throw std::runtime_error("frr_at_far: target must be in (0,1)");
  std::vector<double> candidates;
  for (const auto& r : records) {
    candidates.push_back(r.same_distance);
    candidates.push_back(r.notsame_distance);
  }
  candidates.push_back(-std::numeric_limits<double>::infinity());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto far_at = [&](double t) {
    long hit = 0;
    for (const auto& r : records) hit += r.notsame_distance <= t;
    return double(hit) / records.size();
  };
  auto frr_at = [&](double t) {
    long miss = 0;
    for (const auto& r : records) miss += r.same_distance > t;
    return double(miss) / records.size();
  };
  FrrResult best{1.0, -std::numeric_limits<double>::infinity()};
  for (double t : candidates)
    if (far_at(t) <= far_target) best = {frr_at(t), t};  // candidates ascend, keep largest
  return best;
}

std::string EvalReport::key_values() const {
  std::ostringstream os;
  os << "bpp_mean=" << bpp_mean << "\npsnr_db_mean=" << psnr_db_mean
     << "\nmsssim_mean=" << msssim_mean << "\nfrr_at_far=" << frr_at_far
     << "\nfar_target=" << far_target << "\nl_id_mean=" << l_id_mean
     << "\nn_images=" << n_images << "\nn_identities=" << n_identities
     << "\nn_queries=" << n_queries << "\nfrr_ceiling=" << frr_ceiling << "\n";
  return os.str();
}

std::string EvalReport::csv_header() {
  return "bpp_mean,psnr_db_mean,msssim_mean,frr_at_far,far_target,l_id_mean,n_images,"
         "n_identities,n_queries,frr_ceiling";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << bpp_mean << "," << psnr_db_mean << "," << msssim_mean << "," << frr_at_far << ","
     << far_target << "," << l_id_mean << "," << n_images << "," << n_identities << ","
     << n_queries << "," << frr_ceiling;
  return os.str();
}

EvalReport evaluate_model(const CodecModel<float>& model, const EmbedderParams<float>& embedder,
                          const AlignerConfig& aligner, const std::vector<LabeledImage>& test_set,
                          int gallery_n, double far_target, uint64_t seed, bool bypass_codec) {
  if (test_set.empty()) throw std::runtime_error("evaluate: empty test set");
  if (!embedder.frozen()) throw std::runtime_error("evaluate: embedder must be frozen");
  PMFTableSet tables;
  if (!bypass_codec) tables = build_pmf_tables(model.prior, model.arch().sigma_min);

  EvalReport rep;
  rep.far_target = far_target;
  std::vector<Tensor<float>> orig_emb, recon_emb;
  std::vector<int> ids;
  for (const auto& li : test_set) {
    Tensor<float> recon;
    if (bypass_codec) {
      recon = li.image;
    } else {
      CompressStats st;
      auto container = compress_image(model, tables, li.image, &st);
      recon = decompress_image(model, tables, container);
      rep.bpp_mean += bpp(st.container_bytes, li.image.shape[2], li.image.shape[1]);
    }
    rep.psnr_db_mean += psnr(li.image, recon);
    rep.msssim_mean += msssim_metric(li.image, recon);
    auto e = embed_image(embedder, aligner, li.image);
    auto eh = embed_image(embedder, aligner, recon);
    rep.l_id_mean += cosine_distance(e, eh);
    orig_emb.push_back(std::move(e));
    recon_emb.push_back(std::move(eh));
    ids.push_back(li.identity);
  }
  rep.n_images = (long)test_set.size();
  rep.bpp_mean /= rep.n_images;
  rep.psnr_db_mean /= rep.n_images;
  rep.msssim_mean /= rep.n_images;
  rep.l_id_mean /= rep.n_images;
  rep.n_identities = (long)std::set<int>(ids.begin(), ids.end()).size();

  auto split = split_gallery_query(ids, gallery_n, seed);
  std::vector<Tensor<float>> gal_emb;
  std::vector<int> gal_ids;
  for (int g : split.gallery) {
    gal_emb.push_back(orig_emb[g]);  // enrollment uses uncompressed images
    gal_ids.push_back(ids[g]);
  }
  rep.n_queries = (long)split.query.size();
  if (!split.query.empty()) {
    std::vector<Tensor<float>> q_recon, q_orig;
    std::vector<int> q_ids;
    for (int q : split.query) {
      q_recon.push_back(recon_emb[q]);
      q_orig.push_back(orig_emb[q]);
      q_ids.push_back(ids[q]);
    }
    rep.frr_at_far = frr_at_far(match_distances(q_recon, q_ids, gal_emb, gal_ids), far_target).frr;
    rep.frr_ceiling = frr_at_far(match_distances(q_orig, q_ids, gal_emb, gal_ids), far_target).frr;
  }
  return rep;
}

}  // namespace ipc
