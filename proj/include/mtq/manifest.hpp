#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mtq {

// One utterance of a JSON-lines manifest. Paths are stored as written
// (relative to the manifest's directory) and resolved on use.
struct ManifestEntry {
  std::string id;
  std::string degraded_path;
  std::optional<std::string> clean_path;
  std::optional<std::array<double, 3>> labels;  // smos, nmos, gmos
  std::optional<std::array<double, 3>> pseudo;  // pq, stoi, sdi
  std::string condition;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& relative) const;
  std::filesystem::path degraded(const ManifestEntry& e) const { return resolve(e.degraded_path); }
  // Embedding sidecar convention: the degraded WAV path with extension .mtqe.
  std::filesystem::path embedding(const ManifestEntry& e) const;
};

Manifest read_manifest(const std::filesystem::path& path);
std::string manifest_line(const ManifestEntry& e);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace mtq
