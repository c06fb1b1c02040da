#pragma once

#include <map>

#include "ipc/embedder.hpp"

namespace ipc {

enum class Split { Train, Test, Embedder };

Split split_from_string(const std::string& s);
const char* to_string(Split s);

// one CSV row: image path (relative to the manifest), identity label, split
struct ManifestEntry {
  std::string path;
  std::string identity;
  Split split = Split::Train;
};

// Parses and validates: files exist, embedder-split identities are disjoint
// from train/test identities.
std::vector<ManifestEntry> load_manifest(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Loads a split's images; identity strings are mapped to dense ints via
// id_map, shared across calls so train/test/embedder labels stay consistent.
std::vector<LabeledImage> load_split(const std::vector<ManifestEntry>& entries, Split split,
                                     const std::string& base_dir,
                                     std::map<std::string, int>& id_map);

std::string dir_of(const std::string& path);

}  // namespace ipc
