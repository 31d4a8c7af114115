#include "mtq/manifest.hpp"

#include "mtq/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mtq {

namespace {

using ordered_json = nlohmann::ordered_json;

std::array<double, 3> read_block(const ordered_json& j, const char* a, const char* b,
                                 const char* c) {
  return {j.at(a).get<double>(), j.at(b).get<double>(), j.at(c).get<double>()};
}

}  // namespace

std::filesystem::path Manifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path Manifest::embedding(const ManifestEntry& e) const {
  return degraded(e).replace_extension(".mtqe");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.degraded_path = j.at("degraded_path").get<std::string>();
      if (j.contains("clean_path") && !j["clean_path"].is_null()) {
        e.clean_path = j["clean_path"].get<std::string>();
      }
      if (j.contains("labels") && !j["labels"].is_null()) {
        e.labels = read_block(j["labels"], "smos", "nmos", "gmos");
      }
      if (j.contains("pseudo") && !j["pseudo"].is_null()) {
        e.pseudo = read_block(j["pseudo"], "pq", "stoi", "sdi");
      }
      e.condition = j.value("condition", "");
      if (!ids.insert(e.id).second) throw ConfigError("duplicate id " + e.id);
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const ConfigError& ex) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

std::string manifest_line(const ManifestEntry& e) {
  ordered_json j;
  j["id"] = e.id;
  j["degraded_path"] = e.degraded_path;
  if (e.clean_path) j["clean_path"] = *e.clean_path;
  if (e.labels) {
    j["labels"] = {{"smos", (*e.labels)[0]}, {"nmos", (*e.labels)[1]}, {"gmos", (*e.labels)[2]}};
  }
  if (e.pseudo) {
    j["pseudo"] = {{"pq", (*e.pseudo)[0]}, {"stoi", (*e.pseudo)[1]}, {"sdi", (*e.pseudo)[2]}};
  }
  j["condition"] = e.condition;
  return j.dump();
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : entries) out << manifest_line(e) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mtq
