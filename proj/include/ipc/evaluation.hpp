#pragma once

#include "ipc/compress.hpp"
#include "ipc/embedder.hpp"

namespace ipc {

// 8 * bytes / pixels
double bpp(size_t coded_bytes, int width, int height);

// on 8-bit quantized pixels, peak 255; identical images capped at 99 dB
double psnr(const Tensor<float>& x, const Tensor<float>& x_hat);

// multi-scale SSIM evaluated in double precision
double msssim_metric(const Tensor<float>& x, const Tensor<float>& x_hat);

double cosine_distance(const Tensor<float>& a, const Tensor<float>& b);

// [3,H,W] image -> D-dim embedding through the aligner and frozen trunk
Tensor<float> embed_image(const EmbedderParams<float>& emb, const AlignerConfig& aligner,
                          const Tensor<float>& img);

// index split of a test set; identities with <= n images go gallery-only
struct GalleryQuerySplit {
  std::vector<int> gallery, query;
};
GalleryQuerySplit split_gallery_query(const std::vector<int>& identities, int n, uint64_t seed);

struct QueryRecord {
  int query_index = 0;
  int identity = 0;
  double same_distance = 0;     // min cosine distance to same-identity gallery
  double notsame_distance = 0;  // min cosine distance to other-identity gallery
};

std::vector<QueryRecord> match_distances(const std::vector<Tensor<float>>& query_emb,
                                         const std::vector<int>& query_ids,
                                         const std::vector<Tensor<float>>& gallery_emb,
                                         const std::vector<int>& gallery_ids);

struct FrrResult {
  double frr = 0;
  double threshold = 0;
};
// FRR at the largest threshold whose FAR stays at or under the target
FrrResult frr_at_far(const std::vector<QueryRecord>& records, double far_target);

struct EvalReport {
  double bpp_mean = 0;
  double psnr_db_mean = 0;
  double msssim_mean = 0;
  double frr_at_far = 0;
  double far_target = 0;
  double l_id_mean = 0;
  long n_images = 0;
  long n_identities = 0;
  long n_queries = 0;
  double frr_ceiling = 0;  // same protocol on uncompressed queries
  std::string config_echo;

  std::string key_values() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Full-pipeline evaluation: every test image goes through real entropy-coded
// bitstreams. bypass_codec swaps reconstructions for the originals (metric
// ceiling; bpp reported as 0).
EvalReport evaluate_model(const CodecModel<float>& model, const EmbedderParams<float>& embedder,
                          const AlignerConfig& aligner, const std::vector<LabeledImage>& test_set,
                          int gallery_n, double far_target, uint64_t seed = 0,
                          bool bypass_codec = false);

}  // namespace ipc
