#pragma once

#include "mtq/manifest.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mtq::oracle {

struct EntryError {
  std::string id;
  std::string message;
};

struct PseudoLabelReport {
  Manifest manifest;
  std::size_t computed = 0;
  std::size_t preserved = 0;
  std::vector<EntryError> errors;

  bool ok() const { return errors.empty(); }
};

// Fills pseudo = {pq, stoi, sdi} from the paired audio. Entries that already
// carry a pseudo block pass through verbatim; entries that fail are reported
// and written without a pseudo block.
PseudoLabelReport compute_pseudo_labels(const Manifest& in);
PseudoLabelReport compute_pseudo_labels(const std::filesystem::path& manifest_in,
                                        const std::filesystem::path& out_path);

}  // namespace mtq::oracle
