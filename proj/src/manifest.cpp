#include "ipc/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "ipc/image_io.hpp"

namespace ipc {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "embedder") return Split::Embedder;
  throw std::runtime_error("manifest: unknown split '" + s + "' (train|test|embedder)");
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    default: return "embedder";
  }
}

std::string dir_of(const std::string& path) {
  auto p = std::filesystem::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  std::string base = dir_of(path);
  std::vector<ManifestEntry> entries;
  std::set<std::string> codec_ids, embedder_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("manifest line " + std::to_string(lineno) +
                               ": expected 'path,identity,split'");
    ManifestEntry e;
    e.path = line.substr(0, c1);
    e.identity = line.substr(c1 + 1, c2 - c1 - 1);
    e.split = split_from_string(line.substr(c2 + 1));
    if (e.path.empty() || e.identity.empty())
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": empty field");
    if (!std::filesystem::exists(base + "/" + e.path))
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": missing file '" +
                               e.path + "'");
    (e.split == Split::Embedder ? embedder_ids : codec_ids).insert(e.identity);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw std::runtime_error("manifest is empty: " + path);
  for (const auto& id : embedder_ids)
    if (codec_ids.count(id))
      throw std::runtime_error("manifest: identity '" + id +
                               "' appears in both the embedder split and train/test");
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& e : entries) f << e.path << "," << e.identity << "," << to_string(e.split) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<LabeledImage> load_split(const std::vector<ManifestEntry>& entries, Split split,
                                     const std::string& base_dir,
                                     std::map<std::string, int>& id_map) {
  std::vector<LabeledImage> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    auto [it, inserted] = id_map.emplace(e.identity, (int)id_map.size());
    out.push_back({load_ppm(base_dir + "/" + e.path), it->second});
  }
  return out;
}

}  // namespace ipc
