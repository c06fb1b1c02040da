#pragma once

#include "ipc/embedder.hpp"

namespace ipc {

// Synthetic centered "faces": per-identity smooth pattern (radial blobs, two
// eye spots, mouth arc) fixed across that identity's images, plus per-image
// nuisances (background noise, +/-2px jitter, brightness scale). The identity
// signal lives inside the central 0.7 crop so the aligner sees all of it.
struct ToyDataset {
  std::vector<LabeledImage> train, test, embedder_split;
  std::vector<std::string> identity_names;  // indexed by LabeledImage::identity
};

ToyDataset generate_toyfaces(uint64_t seed, int n_identities, int per_identity, int side,
                             int embedder_identities = 0, int embedder_per_identity = 0);

// one face image; identity pattern keyed by (seed, identity), nuisances by
// (seed, identity, index)
Tensor<float> render_toyface(uint64_t seed, int identity, int index, int side);

// writes one .ppm per image plus manifest.csv into dir
void emit_toyfaces(const std::string& dir, const ToyDataset& ds);

}  // namespace ipc
