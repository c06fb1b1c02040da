#pragma once

#include "ipc/codec_net.hpp"
#include "ipc/container.hpp"
#include "ipc/image_io.hpp"

namespace ipc {

struct CompressStats {
  size_t container_bytes = 0;
  size_t z_payload_bytes = 0;
  size_t y_payload_bytes = 0;
  long clamped_symbols = 0;
  long total_symbols = 0;
};

namespace detail {

inline int conv_out(int n) { return (n - 1) / 2 + 1; }  // k=5, pad=2, stride=2

inline int32_t round_half_away(float v) {
  return (int32_t)std::lround(std::round(double(v)));
}

inline std::vector<int32_t> round_symbols(const Tensor<float>& t) {
  std::vector<int32_t> s;
  s.reserve(t.size());
  for (float v : t.data) s.push_back(round_half_away(v));
  return s;
}

// factorized tables in the coding traversal order: channel-major, then rows
inline std::vector<const PMFTable*> factorized_table_refs(const PMFTableSet& set, int channels,
                                                          long per_channel) {
  std::vector<const PMFTable*> refs;
  refs.reserve(channels * per_channel);
  for (int c = 0; c < channels; ++c)
    for (long i = 0; i < per_channel; ++i) refs.push_back(&set.factorized[c]);
  return refs;
}

inline std::vector<const PMFTable*> gaussian_table_refs(const PMFTableSet& set,
                                                        const Tensor<float>& sigma) {
  std::vector<const PMFTable*> refs;
  refs.reserve(sigma.size());
  for (float s : sigma.data) refs.push_back(&set.gaussian[set.scales.snap_index(s)]);
  return refs;
}

inline Tensor<float> symbols_to_tensor(const std::vector<int32_t>& syms, Shape shape) {
  Tensor<float> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = (float)syms[i];
  return t;
}

// scale field for the rounded hyper-latent, cropped to the latent's grid
inline Tensor<float> sigma_for(const CodecModel<float>& model, const Var<float>& z_hat, int hy,
                               int wy) {
  auto sigma = model.codec.hyper_decode(z_hat);
  const Shape& s = sigma->value.shape;
  if (s[2] != hy || s[3] != wy) sigma = crop(sigma, 0, 0, hy, wy);
  return sigma->value;
}

}  // namespace detail

// [3,H,W] image in [0,1] -> container bytes. The hyper-latent is coded under
// the factorized prior, the latent under per-element Gaussians whose scales
// come from the rounded hyper-latent (so the decoder can reproduce them).
inline std::vector<uint8_t> compress_image(const CodecModel<float>& model,
                                           const PMFTableSet& tables, const Tensor<float>& img,
                                           CompressStats* stats = nullptr) {
  const Shape& s = img.shape;
  if (s.size() != 3 || s[0] != 3)
    throw std::runtime_error("compress: expected [3,H,W] image, got " + shape_str(s));
  int H = s[1], W = s[2];
  if (H < 16 || W < 16) throw std::runtime_error("compress: image sides must be >= 16");
  auto padded = pad_to_multiple(img, 8);
  Tensor<float> x({1, 3, padded.shape[1], padded.shape[2]});
  x.data = padded.data;

  auto y = model.codec.encode(make_input(std::move(x)));
  auto z = model.codec.hyper_encode(y);
  int hy = y->value.shape[2], wy = y->value.shape[3];

  auto z_tables = detail::factorized_table_refs(tables, z->value.shape[1],
                                                long(z->value.shape[2]) * z->value.shape[3]);
  auto z_clamped = clamp_to_support(detail::round_symbols(z->value), z_tables);
  auto b_z = ec_encode(z_clamped.symbols, z_tables);

  auto z_hat = make_input(detail::symbols_to_tensor(z_clamped.symbols, z->value.shape));
  auto sigma = detail::sigma_for(model, z_hat, hy, wy);
  auto y_tables = detail::gaussian_table_refs(tables, sigma);
  auto y_clamped = clamp_to_support(detail::round_symbols(y->value), y_tables);
  auto b_y = ec_encode(y_clamped.symbols, y_tables);

  ContainerMeta meta{(uint32_t)W, (uint32_t)H, model.arch().hash(), model.content_hash()};
  auto bytes = pack_container(meta, b_z, b_y);
  if (stats) {
    stats->container_bytes = bytes.size();
    stats->z_payload_bytes = b_z.size();
    stats->y_payload_bytes = b_y.size();
    stats->clamped_symbols = z_clamped.clamped_count + y_clamped.clamped_count;
    stats->total_symbols = (long)(z_clamped.symbols.size() + y_clamped.symbols.size());
  }
  return bytes;
}

inline Tensor<float> decompress_image(const CodecModel<float>& model, const PMFTableSet& tables,
                                      const std::vector<uint8_t>& container) {
  auto up = unpack_container(container);
  validate_container_hashes(up.meta, model.arch().hash(), model.content_hash());
  int H = (int)up.meta.height, W = (int)up.meta.width;
  int ph = (H + 7) / 8 * 8, pw = (W + 7) / 8 * 8;
  int hy = ph / 8, wy = pw / 8;
  int hz = detail::conv_out(detail::conv_out(hy)), wz = detail::conv_out(detail::conv_out(wy));
  int cy = model.arch().latent_channels, cz = model.arch().hyper_channels;

  auto z_tables = detail::factorized_table_refs(tables, cz, long(hz) * wz);
  auto z_syms = ec_decode(up.b_z, z_tables);
  auto z_hat = make_input(detail::symbols_to_tensor(z_syms, {1, cz, hz, wz}));
  auto sigma = detail::sigma_for(model, z_hat, hy, wy);

  auto y_tables = detail::gaussian_table_refs(tables, sigma);
  auto y_syms = ec_decode(up.b_y, y_tables);
  auto y_hat = make_input(detail::symbols_to_tensor(y_syms, {1, cy, hy, wy}));

  auto x_hat = model.codec.decode(y_hat);
  Tensor<float> padded({3, ph, pw});
  padded.data = x_hat->value.data;
  return crop_to(padded, H, W);
}

}  // namespace ipc
