#pragma once

#include "ipc/arch.hpp"
#include "ipc/conv_ops.hpp"
#include "ipc/entropy_model.hpp"
#include "ipc/serialize.hpp"

namespace ipc {

enum class QuantizeMode { AdditiveNoise, RoundStraightThrough };

// v + U(-0.5, 0.5) in noise mode (gradient passes as identity through the
// constant noise); round-half-away-from-zero with STE in round mode.
template <class T>
Var<T> quantize(const Var<T>& v, QuantizeMode mode, Rng* rng = nullptr) {
  if (mode == QuantizeMode::RoundStraightThrough) return quantize_ste(v);
  if (!rng) throw std::runtime_error("quantize: noise mode needs an RNG");
  Tensor<T> noise(v->value.shape);
  for (auto& n : noise.data) n = T(rng->uniform(-0.5, 0.5));
  return add(v, constant(std::move(noise)));
}

namespace detail {
template <class T>
Tensor<T> he_init(Shape s, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(s));
  T scale = T(std::sqrt(2.0 / fan_in));
  for (auto& v : t.data) v = T(rng.normal()) * scale;
  return t;
}
}  // namespace detail

template <class T>
struct ConvLayer {
  Var<T> w, b;
  static ConvLayer init(int cin, int cout, int k, Rng& rng) {
    return {make_param(detail::he_init<T>({cout, cin, k, k}, cin * k * k, rng)),
            make_param(Tensor<T>::zeros({cout}))};
  }
};

template <class T>
struct ConvTLayer {
  Var<T> w, b;
  static ConvTLayer init(int cin, int cout, int k, Rng& rng) {
    return {make_param(detail::he_init<T>({cin, cout, k, k}, cin * k * k, rng)),
            make_param(Tensor<T>::zeros({cout}))};
  }
};

// Encoder, decoder and the hyper pair of the transform stack. Main pair is a
// factor-8 downsample (3 strided stages), the hyper pair a further factor 4.
template <class T>
struct CodecParams {
  ArchDescriptor arch;
  ConvLayer<T> enc1, enc2, enc3;
  ConvTLayer<T> dec1, dec2, dec3;
  ConvLayer<T> henc1, henc2;
  ConvTLayer<T> hdec1, hdec2;

  static CodecParams init(const ArchDescriptor& a, Rng& rng) {
    CodecParams p;
    p.arch = a;
    int F = a.hidden, Cy = a.latent_channels, Cz = a.hyper_channels, k = a.kernel;
    p.enc1 = ConvLayer<T>::init(3, F, k, rng);
    p.enc2 = ConvLayer<T>::init(F, F, k, rng);
    p.enc3 = ConvLayer<T>::init(F, Cy, k, rng);
    p.dec1 = ConvTLayer<T>::init(Cy, F, k, rng);
    p.dec2 = ConvTLayer<T>::init(F, F, k, rng);
    p.dec3 = ConvTLayer<T>::init(F, 3, k, rng);
    p.henc1 = ConvLayer<T>::init(Cy, F, k, rng);
    p.henc2 = ConvLayer<T>::init(F, Cz, k, rng);
    p.hdec1 = ConvTLayer<T>::init(Cz, F, k, rng);
    p.hdec2 = ConvTLayer<T>::init(F, Cy, k, rng);
    return p;
  }

  std::vector<std::pair<std::string, Var<T>>> params() const {
    std::vector<std::pair<std::string, Var<T>>> out;
    auto put = [&](const std::string& n, const Var<T>& w, const Var<T>& b) {
      out.emplace_back(n + ".w", w);
      out.emplace_back(n + ".b", b);
    };
    put("enc1", enc1.w, enc1.b);
    put("enc2", enc2.w, enc2.b);
    put("enc3", enc3.w, enc3.b);
    put("dec1", dec1.w, dec1.b);
    put("dec2", dec2.w, dec2.b);
    put("dec3", dec3.w, dec3.b);
    put("henc1", henc1.w, henc1.b);
    put("henc2", henc2.w, henc2.b);
    put("hdec1", hdec1.w, hdec1.b);
    put("hdec2", hdec2.w, hdec2.b);
    return out;
  }

  int stride_pad() const { return (arch.kernel - 1) / 2; }

  // x [N,3,H,W] in [0,1], H and W multiples of 8 -> y [N,Cy,H/8,W/8]
  Var<T> encode(const Var<T>& x) const {
    const Shape& s = x->value.shape;
    if (s.size() != 4 || s[1] != 3)
      throw std::runtime_error("encode: expected Nx3xHxW, got " + shape_str(s));
    if (s[2] % 8 || s[3] % 8)
      throw std::runtime_error("encode: sides must be multiples of 8 (pad the image first), got " +
                               shape_str(s));
    int p = stride_pad();
    T slope = T(0.2);
    auto h = leaky_relu(conv2d(x, enc1.w, enc1.b, 2, p), slope);
    h = leaky_relu(conv2d(h, enc2.w, enc2.b, 2, p), slope);
    return conv2d(h, enc3.w, enc3.b, 2, p);
  }

  // y_hat [N,Cy,h,w] -> x_hat [N,3,8h,8w] in (0,1)
  Var<T> decode(const Var<T>& y_hat) const {
    const Shape& s = y_hat->value.shape;
    if (s.size() != 4 || s[1] != arch.latent_channels)
      throw std::runtime_error("decode: latent " + shape_str(s) + " does not match C_y=" +
                               std::to_string(arch.latent_channels));
    int p = stride_pad();
    T slope = T(0.2);
    auto h = leaky_relu(conv2d_transpose(y_hat, dec1.w, dec1.b, 2, p, 1), slope);
    h = leaky_relu(conv2d_transpose(h, dec2.w, dec2.b, 2, p, 1), slope);
    return sigmoid(conv2d_transpose(h, dec3.w, dec3.b, 2, p, 1));
  }

  // |y| -> z [N,Cz,h/4,w/4]
  Var<T> hyper_encode(const Var<T>& y) const {
    int p = stride_pad();
    auto h = leaky_relu(conv2d(abs_(y), henc1.w, henc1.b, 2, p), T(0.2));
    return conv2d(h, henc2.w, henc2.b, 2, p);
  }

  // z_hat -> per-element scale, floored at sigma_min
  Var<T> hyper_decode(const Var<T>& z_hat) const {
    int p = stride_pad();
    auto h = leaky_relu(conv2d_transpose(z_hat, hdec1.w, hdec1.b, 2, p, 1), T(0.2));
    auto raw = conv2d_transpose(h, hdec2.w, hdec2.b, 2, p, 1);
    return lower_bound(raw, T(arch.sigma_min));
  }
};

// Full model: transforms plus the factorized prior over the hyper-latent.
template <class T>
struct CodecModel {
  CodecParams<T> codec;
  FactorizedPrior<T> prior;

  static CodecModel init(const ArchDescriptor& a, uint64_t seed) {
    Rng rng(seed);
    CodecModel m;
    m.codec = CodecParams<T>::init(a, rng);
    m.prior = FactorizedPrior<T>::init(a.hyper_channels);
    return m;
  }

  const ArchDescriptor& arch() const { return codec.arch; }

  std::vector<std::pair<std::string, Var<T>>> params() const {
    auto out = codec.params();
    auto pp = prior.params();
    out.insert(out.end(), pp.begin(), pp.end());
    return out;
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
    if (ts.size() != ps.size())
      throw std::runtime_error("checkpoint: expected " + std::to_string(ps.size()) +
                               " tensors, found " + std::to_string(ts.size()));
    for (size_t i = 0; i < ps.size(); ++i) {
      if (ts[i].first != ps[i].first)
        throw std::runtime_error("checkpoint: tensor '" + ts[i].first + "' where '" +
                                 ps[i].first + "' expected");
      require_same_shape(ps[i].second->value.shape, ts[i].second.shape, "checkpoint load");
      ps[i].second->value = ts[i].second.template cast<T>();
    }
  }
};

}  // namespace ipc
