#include "ipc/toyfaces.hpp"

#include <algorithm>
#include <filesystem>

#include "ipc/image_io.hpp"
#include "ipc/manifest.hpp"

namespace ipc {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt, uint64_t a, uint64_t b = 0) {
  uint64_t words[4] = {seed, salt, a, b};
  return fnv1a64(words, sizeof(words));
}

struct Blob {
  double x, y, sigma;
  double amp[3];
};

// per-identity appearance, fixed for all of that identity's images
struct FaceSpec {
  double skin[3];
  double rx, ry;  // face half-extents as fractions of the side
  std::vector<Blob> blobs;
  double eye_y, eye_x, eye_r, eye_dark;
  double mouth_y, mouth_w, mouth_curve, mouth_dark;

  static FaceSpec draw(Rng& rng) {
    FaceSpec f;
    for (auto& s : f.skin) s = rng.uniform(0.45, 0.8);
    f.rx = rng.uniform(0.24, 0.31);
    f.ry = rng.uniform(0.24, 0.31);
    f.blobs.resize(3);
    for (auto& b : f.blobs) {
      b.x = rng.uniform(-0.5, 0.5);
      b.y = rng.uniform(-0.5, 0.5);
      b.sigma = rng.uniform(0.15, 0.4);
      for (auto& a : b.amp) a = rng.uniform(-0.25, 0.25);
    }
    f.eye_y = rng.uniform(-0.45, -0.25);
    f.eye_x = rng.uniform(0.3, 0.5);
    f.eye_r = rng.uniform(0.07, 0.12);
    f.eye_dark = rng.uniform(0.5, 0.9);
    f.mouth_y = rng.uniform(0.35, 0.55);
    f.mouth_w = rng.uniform(0.35, 0.6);
    f.mouth_curve = rng.uniform(0.1, 0.3);
    f.mouth_dark = rng.uniform(0.4, 0.8);
    return f;
  }
};

}  // namespace

Tensor<float> render_toyface(uint64_t seed, int identity, int index, int side) {
  Rng id_rng(mix_seed(seed, 0x1D, (uint64_t)identity));
  FaceSpec f = FaceSpec::draw(id_rng);

  Rng rng(mix_seed(seed, 0x2A, (uint64_t)identity, (uint64_t)index));
  double bg[3];
  for (auto& v : bg) v = rng.uniform(0.1, 0.5);
  int dx = (int)rng.below(5) - 2, dy = (int)rng.below(5) - 2;
  double bright = rng.uniform(0.8, 1.2);

  Tensor<float> img({3, side, side});
  double cx = side / 2.0 + dx, cy = side / 2.0 + dy;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      double noise[3];
      for (auto& n : noise) n = rng.uniform(-0.08, 0.08);
      double u = (j - cx) / (f.rx * side), v = (i - cy) / (f.ry * side);
      double d = std::sqrt(u * u + v * v);
      double alpha = std::clamp((1.0 - d) / 0.08, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        double val = bg[c] + noise[c];
        if (alpha > 0) {
          double fc = f.skin[c];
          for (const auto& b : f.blobs) {
            double du = u - b.x, dv = v - b.y;
            fc += b.amp[c] * std::exp(-(du * du + dv * dv) / (2 * b.sigma * b.sigma));
          }
          for (int s : {-1, 1}) {
            double du = u - s * f.eye_x, dv = v - f.eye_y;
            fc -= f.eye_dark * std::exp(-(du * du + dv * dv) / (2 * f.eye_r * f.eye_r));
          }
          if (std::abs(u) < f.mouth_w) {
            double t = u / f.mouth_w;
            double dv = v - (f.mouth_y + f.mouth_curve * t * t);
            fc -= f.mouth_dark * std::exp(-dv * dv / (2 * 0.05 * 0.05));
          }
          val = (1 - alpha) * val + alpha * fc;
        }
        img[(long(c) * side + i) * side + j] = (float)std::clamp(bright * val, 0.02, 0.98);
      }
    }
  return img;
}

ToyDataset generate_toyfaces(uint64_t seed, int n_identities, int per_identity, int side,
                             int embedder_identities, int embedder_per_identity) {
  if (n_identities < 2) throw std::runtime_error("toyfaces: need at least 2 identities");
  if (per_identity < 1 || side < 16) throw std::runtime_error("toyfaces: bad image count or side");
  ToyDataset ds;
  char buf[32];
  for (int id = 0; id < n_identities + embedder_identities; ++id) {
    std::snprintf(buf, sizeof(buf), "id%03d", id);
    ds.identity_names.emplace_back(buf);
  }
  for (int id = 0; id < n_identities; ++id)
    for (int k = 0; k < per_identity; ++k) {
      auto& dst = (k % 4 == 3) ? ds.test : ds.train;
      dst.push_back({render_toyface(seed, id, k, side), id});
    }
  for (int e = 0; e < embedder_identities; ++e) {
    int id = n_identities + e;
    for (int k = 0; k < embedder_per_identity; ++k)
      ds.embedder_split.push_back({render_toyface(seed, id, k, side), id});
  }
  return ds;
}

void emit_toyfaces(const std::string& dir, const ToyDataset& ds) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  std::map<int, int> counters;
  auto emit = [&](const std::vector<LabeledImage>& set, Split split) {
    for (const auto& li : set) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_%03d.ppm", ds.identity_names[li.identity].c_str(),
                    counters[li.identity]++);
      save_ppm(dir + "/" + buf, li.image);
      entries.push_back({buf, ds.identity_names[li.identity], split});
    }
  };
  emit(ds.train, Split::Train);
  emit(ds.test, Split::Test);
  emit(ds.embedder_split, Split::Embedder);
  write_manifest(dir + "/manifest.csv", entries);
}

}  // namespace ipc
