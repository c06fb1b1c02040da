#pragma once

#include <ostream>

#include "ipc/embedder.hpp"
#include "ipc/loss.hpp"

namespace ipc {

// One optimization run: REC (lambda_id=0), IPR (rec + rate + id) or IP
// (kind=none, rate + id). The identity-weighted regimes start from a REC
// checkpoint unless cold start is explicitly allowed.
struct TrainConfig {
  LossWeights weights;
  AdamHyper adam;
  int batch_size = 8;
  int steps = 3000;
  uint64_t seed = 1;
  ArchDescriptor arch;
  std::string warm_start_path;
  bool allow_cold_start = false;

  void validate() const {
    weights.validate();
    if (batch_size < 1 || steps < 0) throw std::runtime_error("train: bad batch size or step count");
    if (weights.lambda_id > 0 && warm_start_path.empty() && !allow_cold_start)
      throw std::runtime_error(
          "train: identity-weighted regimes start from a reconstruction-only checkpoint; "
          "give warm_start or set allow_cold_start");
  }
};

struct Checkpoint {
  CodecModel<float> model;
  AdamState<float> opt;
  long step = 0;
  std::string config_echo;
};

inline void save_checkpoint(const std::string& path, const CodecModel<float>& model,
                            const AdamState<float>& opt, long step,
                            const std::string& config_echo) {
  BlobFile bf;
  bf.magic = "IPCK";
  bf.arch = model.arch().canonical();
  bf.tensors = model.named_tensors();
  auto ps = model.params();
  if (!opt.m.empty()) {
    if (opt.m.size() != ps.size()) throw std::runtime_error("checkpoint: optimizer/param mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
      bf.opt_tensors.emplace_back("adam.m." + ps[i].first, opt.m[i]);
      bf.opt_tensors.emplace_back("adam.v." + ps[i].first, opt.v[i]);
    }
  }
  bf.config_echo = "step=" + std::to_string(step) + "\n" + config_echo;
  write_blob_file(path, bf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  BlobFile bf = read_blob_file(path, "IPCK");
  Checkpoint ck;
  ck.model = CodecModel<float>::init(ArchDescriptor::parse(bf.arch), 0);
  ck.model.load_named_tensors(bf.tensors);
  auto ps = ck.model.params();
  if (!bf.opt_tensors.empty()) {
    if (bf.opt_tensors.size() != 2 * ps.size())
      throw std::runtime_error("checkpoint: unexpected optimizer tensor count");
    for (size_t i = 0; i < ps.size(); ++i) {
      if (bf.opt_tensors[2 * i].first != "adam.m." + ps[i].first ||
          bf.opt_tensors[2 * i + 1].first != "adam.v." + ps[i].first)
        throw std::runtime_error("checkpoint: optimizer tensors out of order");
      ck.opt.m.push_back(bf.opt_tensors[2 * i].second);
      ck.opt.v.push_back(bf.opt_tensors[2 * i + 1].second);
    }
  }
  ck.config_echo = bf.config_echo;
  auto eol = ck.config_echo.find('\n');
  std::string first = ck.config_echo.substr(0, eol);
  if (first.rfind("step=", 0) == 0) {
    ck.step = std::stol(first.substr(5));
    ck.opt.step = ck.step;
    ck.config_echo = eol == std::string::npos ? "" : ck.config_echo.substr(eol + 1);
  }
  return ck;
}

// Copies a checkpoint's parameters into a fresh training state: optimizer
// moments and step counter reset, architecture must match.
inline std::pair<CodecModel<float>, AdamState<float>> warm_start(const Checkpoint& ck,
                                                                 const ArchDescriptor& arch) {
  if (!(ck.model.arch() == arch))
    throw std::runtime_error("warm_start: checkpoint architecture '" + ck.model.arch().canonical() +
                             "' does not match '" + arch.canonical() + "'");
  CodecModel<float> model = CodecModel<float>::init(arch, 0);
  model.load_named_tensors(ck.model.named_tensors());
  std::vector<Var<float>> vars;
  for (auto& [name, p] : model.params()) vars.push_back(p);
  return {std::move(model), AdamState<float>::init(vars)};
}

struct TrainResult {
  CodecModel<float> model;
  AdamState<float> opt;
  long step = 0;
  std::vector<LossBreakdown> log;
};

// Thrown when the loss goes non-finite; carries the last finite state.
struct TrainAborted : std::runtime_error {
  Checkpoint last_good;
  TrainAborted(const std::string& what, Checkpoint ck)
      : std::runtime_error(what), last_good(std::move(ck)) {}
};

namespace detail {
inline Tensor<float> stack_images(const std::vector<Tensor<float>>& images,
                                  const std::vector<size_t>& pick) {
  const Shape& s = images[pick[0]].shape;
  Tensor<float> out({(int)pick.size(), s[0], s[1], s[2]});
  long per = images[pick[0]].size();
  for (size_t i = 0; i < pick.size(); ++i) {
    const auto& im = images[pick[i]];
    if (im.shape != s) throw std::runtime_error("train: mixed image shapes in one dataset");
    std::copy(im.data.begin(), im.data.end(), out.data.begin() + long(i) * per);
  }
  return out;
}
}  // namespace detail

// Losses for one batch with the rate/distortion wiring of the hyper-prior
// model: likelihoods are evaluated on noise-quantized latents, while the
// decoder (and embedder) consume straight-through-rounded ones.
inline TotalLoss<float> training_losses(const CodecModel<float>& model, const Var<float>& x,
                                        const LossWeights& w,
                                        const EmbedderParams<float>* embedder,
                                        const AlignerConfig& aligner, Rng& rng) {
  auto y = model.codec.encode(x);
  auto z = model.codec.hyper_encode(y);
  auto y_tilde = quantize(y, QuantizeMode::AdditiveNoise, &rng);
  auto z_tilde = quantize(z, QuantizeMode::AdditiveNoise, &rng);
  auto z_hat = quantize_ste(z);
  auto sigma = model.codec.hyper_decode(z_hat);
  if (sigma->value.shape != y->value.shape)  // hyper pair over-covers odd latent grids
    sigma = crop(sigma, 0, 0, y->value.shape[2], y->value.shape[3]);
  auto p_y = likelihood_gaussian(y_tilde, sigma);
  auto p_z = likelihood_factorized(z_tilde, model.prior);
  auto rate = loss_rate(p_y, p_z);

  Var<float> rec, id, x_hat;
  if (w.kind != RecKind::None || w.lambda_id != 0.0)
    x_hat = model.codec.decode(quantize_ste(y));
  if (w.kind != RecKind::None) rec = loss_rec(x, x_hat, w.kind);
  if (w.lambda_id != 0.0) {
    if (!embedder) throw std::runtime_error("train: lambda_id > 0 needs a frozen embedder");
    if (!embedder->frozen()) throw std::runtime_error("train: embedder must be frozen");
    id = loss_id(embedder->embed(align(x, aligner)), embedder->embed(align(x_hat, aligner)));
  }
  return loss_total(rec, rate, id, w);
}

inline TrainResult train(const TrainConfig& cfg, const std::vector<Tensor<float>>& images,
                         const EmbedderParams<float>* embedder = nullptr,
                         const AlignerConfig& aligner = {}, std::ostream* log_stream = nullptr) {
  cfg.validate();
  if (images.empty()) throw std::runtime_error("train: empty training set");

  CodecModel<float> model;
  AdamState<float> opt;
  if (!cfg.warm_start_path.empty()) {
    std::tie(model, opt) = warm_start(load_checkpoint(cfg.warm_start_path), cfg.arch);
  } else {
    model = CodecModel<float>::init(cfg.arch, cfg.seed);
    std::vector<Var<float>> vars;
    for (auto& [name, p] : model.params()) vars.push_back(p);
    opt = AdamState<float>::init(vars);
  }

  std::vector<Var<float>> opt_params;
  for (auto& [name, p] : model.params()) opt_params.push_back(p);
  if (embedder)  // the downstream model is never optimized
    for (auto& [name, p] : embedder->params())
      for (const auto& q : opt_params)
        if (q == p) throw std::runtime_error("train: embedder parameter in optimizer state");

  Rng rng(cfg.seed);
  TrainResult res;
  for (long step = 1; step <= cfg.steps; ++step) {
    std::vector<size_t> pick(cfg.batch_size);
    for (auto& i : pick) i = rng.below(images.size());
    auto x = make_input(detail::stack_images(images, pick));
    auto losses = training_losses(model, x, cfg.weights, embedder, aligner, rng);
    auto b = losses.breakdown();
    if (!std::isfinite(b.total))
      throw TrainAborted("train: non-finite loss at step " + std::to_string(step),
                         {model, opt, step - 1, ""});
    backward(losses.total);
    adam_step(opt_params, opt, cfg.adam);
    res.log.push_back(b);
    if (log_stream)
      (*log_stream) << step << "," << b.rec << "," << b.rate_bits << "," << b.id << ","
                    << b.total << "\n";
  }
  res.model = std::move(model);
  res.opt = std::move(opt);
  res.step = cfg.steps;
  return res;
}

inline std::string train_config_echo(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "kind=" << to_string(cfg.weights.kind) << "\nlambda_rate=" << cfg.weights.lambda_rate
     << "\nlambda_id=" << cfg.weights.lambda_id << "\nlr=" << cfg.adam.lr
     << "\nbatch=" << cfg.batch_size << "\nsteps=" << cfg.steps << "\nseed=" << cfg.seed
     << "\narch=" << cfg.arch.canonical() << "\n";
  if (!cfg.warm_start_path.empty()) os << "warm_start=" << cfg.warm_start_path << "\n";
  return os.str();
}

}  // namespace ipc
