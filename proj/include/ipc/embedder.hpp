#pragma once

#include <map>
#include <set>

#include "ipc/adam.hpp"
#include "ipc/codec_net.hpp"

namespace ipc {

// Deterministic replacement for a face detector/aligner: centered square crop
// by fraction, then bilinear resize to the embedder input side.
struct AlignerConfig {
  double crop_fraction = 0.7;
  int out_size = 32;

  void validate() const {
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
      throw std::runtime_error("aligner: crop fraction must be in (0,1], got " +
                               std::to_string(crop_fraction));
    if (out_size <= 0) throw std::runtime_error("aligner: output side must be positive");
  }
};

template <class T>
Var<T> align(const Var<T>& x, const AlignerConfig& cfg) {
  cfg.validate();
  const Shape& s = x->value.shape;
  if (s.size() != 4) throw std::runtime_error("align: expected NCHW, got " + shape_str(s));
  int H = s[2], W = s[3];
  int side = std::max(1, (int)std::lround(std::min(H, W) * cfg.crop_fraction));
  auto c = crop(x, (H - side) / 2, (W - side) / 2, side, side);
  return resize_bilinear(c, cfg.out_size, cfg.out_size);
}

struct EmbedderArch {
  int in_side = 32;
  int c1 = 16;
  int c2 = 32;
  int dim = 64;
  int kernel = 5;

  std::string canonical() const {
    std::ostringstream os;
    os << "ipce-v1;s=" << in_side << ";c1=" << c1 << ";c2=" << c2 << ";d=" << dim
       << ";k=" << kernel;
    return os.str();
  }
  bool operator==(const EmbedderArch&) const = default;

  static EmbedderArch parse(const std::string& s) {
    EmbedderArch a;
    std::istringstream is(s);
    std::string tok;
    if (!std::getline(is, tok, ';') || tok != "ipce-v1")
      throw std::runtime_error("embedder arch: unrecognized descriptor '" + s + "'");
    while (std::getline(is, tok, ';')) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw std::runtime_error("embedder arch: bad field '" + tok + "'");
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "s")
        a.in_side = std::stoi(v);
      else if (k == "c1")
        a.c1 = std::stoi(v);
      else if (k == "c2")
        a.c2 = std::stoi(v);
      else if (k == "d")
        a.dim = std::stoi(v);
      else if (k == "k")
        a.kernel = std::stoi(v);
      else
        throw std::runtime_error("embedder arch: unknown field '" + k + "'");
    }
    return a;
  }
};

enum class EmbedderMode { SeededRandom, Pretrained };

inline const char* to_string(EmbedderMode m) {
  return m == EmbedderMode::SeededRandom ? "seeded-random" : "pretrained";
}

// Per-sample standardization: each image becomes zero-mean/unit-variance, so
// global brightness and offset nuisances cancel before the trunk sees them.
template <class T>
Var<T> standardize_per_sample(const Var<T>& x) {
  const Shape& s = x->value.shape;
  if (s.size() != 4) throw std::runtime_error("standardize: expected NCHW, got " + shape_str(s));
  int N = s[0];
  auto flat = reshape(x, {1, N * s[1], s[2], s[3]});
  std::vector<Var<T>> parts;
  for (int n = 0; n < N; ++n) {
    auto xi = slice_channels(flat, n * s[1], (n + 1) * s[1]);
    auto m = mean(xi);
    auto d = badd(xi, smul(m, T(-1)));
    auto var = mean(mul(d, d));
    auto inv_std = exp_(smul(log_(sadd(var, T(1e-6))), T(-0.5)));
    parts.push_back(bmul(d, inv_std));
  }
  return reshape(concat_channels(parts), {N, s[1], s[2], s[3]});
}

// Frozen recognition trunk: per-sample standardization, two strided convs,
// global average pool, linear head to a D-dim embedding. Parameters are
// immutable after construction and never enter any optimizer; gradients still
// flow to the input pixels.
template <class T>
struct EmbedderParams {
  EmbedderArch arch;
  ConvLayer<T> conv1, conv2;
  Var<T> head_w, head_b;  // [c2,D], [D]
  std::string provenance = "seeded-random";
  uint64_t seed = 0;

  static EmbedderParams init(const EmbedderArch& a, Rng& rng) {
    EmbedderParams p;
    p.arch = a;
    p.conv1 = ConvLayer<T>::init(3, a.c1, a.kernel, rng);
    p.conv2 = ConvLayer<T>::init(a.c1, a.c2, a.kernel, rng);
    p.head_w = make_param(detail::he_init<T>({a.c2, a.dim}, a.c2, rng));
    p.head_b = make_param(Tensor<T>::zeros({a.dim}));
    return p;
  }

  std::vector<std::pair<std::string, Var<T>>> params() const {
    return {{"conv1.w", conv1.w}, {"conv1.b", conv1.b}, {"conv2.w", conv2.w},
            {"conv2.b", conv2.b}, {"head.w", head_w},   {"head.b", head_b}};
  }

  void freeze() {
    for (auto& [name, p] : params()) {
      p->requires_grad = false;
      p->is_param = false;
      p->grad = {};  // drop any buffers left over from pretraining
    }
  }

  bool frozen() const {
    for (auto& [name, p] : params())
      if (p->requires_grad) return false;
    return true;
  }

  // aligned [N,3,S,S] -> [N,D]
  Var<T> embed(const Var<T>& aligned) const {
    const Shape& s = aligned->value.shape;
    if (s.size() != 4 || s[1] != 3 || s[2] != arch.in_side || s[3] != arch.in_side)
      throw std::runtime_error("embed: expected Nx3x" + std::to_string(arch.in_side) + "x" +
                               std::to_string(arch.in_side) + ", got " + shape_str(s));
    int p = (arch.kernel - 1) / 2;
    T slope = T(0.2);
    auto h = leaky_relu(conv2d(standardize_per_sample(aligned), conv1.w, conv1.b, 2, p), slope);
    h = leaky_relu(conv2d(h, conv2.w, conv2.b, 2, p), slope);
    return add_row_bias(matmul(spatial_mean(h), head_w), head_b);
  }

  NamedTensors named_tensors() const {
    NamedTensors out;
    for (const auto& [name, v] : params())
      out.emplace_back(name, v->value.template cast<float>());
    return out;
  }

  uint64_t content_hash() const { return named_tensors_hash(named_tensors()); }

  void load_named_tensors(const NamedTensors& ts) {
    auto ps = params();
    if (ts.size() != ps.size()) throw std::runtime_error("embedder: wrong tensor count");
    for (size_t i = 0; i < ps.size(); ++i) {
      if (ts[i].first != ps[i].first)
        throw std::runtime_error("embedder: tensor '" + ts[i].first + "' where '" +
                                 ps[i].first + "' expected");
      require_same_shape(ps[i].second->value.shape, ts[i].second.shape, "embedder load");
      ps[i].second->value = ts[i].second.template cast<T>();
    }
  }
};

struct LabeledImage {
  Tensor<float> image;  // [3,H,W] in [0,1]
  int identity = 0;
};

namespace detail {

template <class T>
Tensor<T> stack_batch(const std::vector<LabeledImage>& set, const std::vector<int>& idx) {
  const Shape& s = set[idx[0]].image.shape;
  Tensor<T> out({(int)idx.size(), s[0], s[1], s[2]});
  long per = set[idx[0]].image.size();
  for (size_t i = 0; i < idx.size(); ++i) {
    const auto& im = set[idx[i]].image;
    if (im.shape != s) throw std::runtime_error("embedder pretraining: mixed image shapes");
    for (long j = 0; j < per; ++j) out[long(i) * per + j] = T(im[j]);
  }
  return out;
}

template <class T>
double classifier_accuracy(const EmbedderParams<T>& emb, const AlignerConfig& aligner,
                           const Var<T>& cls_w, const Var<T>& cls_b,
                           const std::vector<LabeledImage>& set, const std::vector<int>& idx,
                           const std::vector<int>& labels) {
  auto x = make_input(stack_batch<T>(set, idx));
  auto logits = add_row_bias(matmul(emb.embed(align(x, aligner)), cls_w), cls_b);
  int K = logits->value.shape[1], hit = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    const T* row = &logits->value[long(i) * K];
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;
    if (best == labels[idx[i]]) ++hit;
  }
  return double(hit) / idx.size();
}

}  // namespace detail

// Builds a frozen embedder. Pretrained mode fits a softmax classifier over the
// given toy identities (which must be disjoint from the codec's), keeps the
// trunk at the first checkpoint reaching the held-out accuracy bar, and
// discards the classifier.
template <class T>
EmbedderParams<T> make_embedder(EmbedderMode mode, uint64_t seed,
                                const AlignerConfig& aligner = {}, const EmbedderArch& arch = {},
                                const std::vector<LabeledImage>& train_set = {},
                                const std::set<int>& codec_identities = {},
                                double accuracy_bar = 0.9) {
  aligner.validate();
  if (arch.in_side != aligner.out_size)
    throw std::runtime_error("make_embedder: aligner output side does not match embedder input");
  Rng rng(seed);
  auto emb = EmbedderParams<T>::init(arch, rng);
  emb.seed = seed;
  if (mode == EmbedderMode::SeededRandom) {
    emb.provenance = "seeded-random";
    emb.freeze();
    return emb;
  }

  if (train_set.empty())
    throw std::runtime_error("make_embedder: pretrained mode needs a toy identity training set");
  std::set<int> ids;
  for (const auto& li : train_set) ids.insert(li.identity);
  for (int id : ids)
    if (codec_identities.count(id))
      throw std::runtime_error("make_embedder: identity " + std::to_string(id) +
                               " appears in both the embedder and codec sets");
  std::map<int, int> remap;
  for (int id : ids) remap.emplace(id, (int)remap.size());
  int K = (int)remap.size();
  if (K < 2) throw std::runtime_error("make_embedder: need at least 2 identities to pretrain");

  std::vector<int> labels(train_set.size());
  for (size_t i = 0; i < train_set.size(); ++i) labels[i] = remap.at(train_set[i].identity);

  // per-identity holdout: every 4th image of an identity
  std::vector<int> fit_idx, holdout_idx;
  std::map<int, int> seen;
  for (size_t i = 0; i < train_set.size(); ++i) {
    int nth = seen[labels[i]]++;
    (nth % 4 == 3 ? holdout_idx : fit_idx).push_back((int)i);
  }
  if (holdout_idx.empty())
    throw std::runtime_error("make_embedder: too few images per identity for a holdout");

  auto cls_w = make_param(detail::he_init<T>({arch.dim, K}, arch.dim, rng));
  auto cls_b = make_param(Tensor<T>::zeros({K}));
  std::vector<Var<T>> opt_params;
  for (auto& [name, p] : emb.params()) opt_params.push_back(p);
  opt_params.push_back(cls_w);
  opt_params.push_back(cls_b);
  AdamState<T> st = AdamState<T>::init(opt_params);
  AdamHyper hyper;

  const int batch = std::min<int>(16, (int)fit_idx.size());
  const int max_steps = 3000, check_every = 50;
  for (int step = 1; step <= max_steps; ++step) {
    std::vector<int> idx(batch);
    for (int i = 0; i < batch; ++i)
      idx[i] = fit_idx[rng.below(fit_idx.size())];
    std::vector<int> batch_labels(batch);
    for (int i = 0; i < batch; ++i) batch_labels[i] = labels[idx[i]];
    auto x = make_input(detail::stack_batch<T>(train_set, idx));
    auto logits = add_row_bias(matmul(emb.embed(align(x, aligner)), cls_w), cls_b);
    backward(softmax_xent(logits, batch_labels));
    adam_step(opt_params, st, hyper);
    if (step % check_every == 0 &&
        detail::classifier_accuracy(emb, aligner, cls_w, cls_b, train_set, holdout_idx, labels) >=
            accuracy_bar) {
      emb.provenance = "pretrained";
      emb.freeze();
      return emb;
    }
  }
  throw std::runtime_error("make_embedder: pretraining never reached " +
                           std::to_string(accuracy_bar) + " held-out accuracy");
}

inline std::string embedder_config_echo(const std::string& provenance, uint64_t seed,
                                        const AlignerConfig& aligner) {
  std::ostringstream os;
  os << "provenance=" << provenance << "\nseed=" << seed
     << "\ncrop_fraction=" << aligner.crop_fraction << "\nout_size=" << aligner.out_size << "\n";
  return os.str();
}

template <class T>
void save_embedder(const std::string& path, const EmbedderParams<T>& emb,
                   const AlignerConfig& aligner) {
  BlobFile bf;
  bf.magic = "IPCE";
  bf.arch = emb.arch.canonical();
  bf.tensors = emb.named_tensors();
  bf.config_echo = embedder_config_echo(emb.provenance, emb.seed, aligner);
  write_blob_file(path, bf);
}

template <class T>
std::pair<EmbedderParams<T>, AlignerConfig> load_embedder(const std::string& path) {
  BlobFile bf = read_blob_file(path, "IPCE");
  EmbedderArch arch = EmbedderArch::parse(bf.arch);
  Rng rng(0);
  auto emb = EmbedderParams<T>::init(arch, rng);
  emb.load_named_tensors(bf.tensors);
  AlignerConfig aligner;
  std::istringstream is(bf.config_echo);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "provenance")
      emb.provenance = v;
    else if (k == "seed")
      emb.seed = std::stoull(v);
    else if (k == "crop_fraction")
      aligner.crop_fraction = std::stod(v);
    else if (k == "out_size")
      aligner.out_size = std::stoi(v);
  }
  aligner.validate();
  if (aligner.out_size != arch.in_side)
    throw std::runtime_error("embedder file: aligner output does not match trunk input");
  emb.freeze();
  return {std::move(emb), aligner};
}

}  // namespace ipc
