#include "mtq/pseudo_labels.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/errors.hpp"
#include "mtq/oracle.hpp"

namespace mtq::oracle {

PseudoLabelReport compute_pseudo_labels(const Manifest& in) {
  PseudoLabelReport report;
  report.manifest = in;
  for (ManifestEntry& e : report.manifest.entries) {
    if (e.pseudo) {
      ++report.preserved;
      continue;
    }
    if (!e.clean_path) {
      report.errors.push_back({e.id, "no clean_path and no pseudo block"});
      continue;
    }
    try {
      auto pair = PairedUtterance::make(io::read_wav(in.resolve(*e.clean_path)),
                                        io::read_wav(in.degraded(e)));
      const OracleScores s = score_pair(pair);
      e.pseudo = std::array<double, 3>{s.pq, s.stoi, s.sdi};
      ++report.computed;
    } catch (const Error& ex) {
      report.errors.push_back({e.id, ex.what()});
    }
  }
  return report;
}

PseudoLabelReport compute_pseudo_labels(const std::filesystem::path& manifest_in,
                                        const std::filesystem::path& out_path) {
  PseudoLabelReport report = compute_pseudo_labels(read_manifest(manifest_in));
  // Paths stay relative to the input manifest's directory.
  std::vector<ManifestEntry> entries = report.manifest.entries;
  const auto out_dir = out_path.parent_path();
  const auto in_dir = report.manifest.base_dir;
  if (std::filesystem::weakly_canonical(out_dir.empty() ? "." : out_dir) !=
      std::filesystem::weakly_canonical(in_dir.empty() ? "." : in_dir)) {
    for (ManifestEntry& e : entries) {
      auto rebase = [&](const std::string& p) {
        const auto abs = std::filesystem::absolute(report.manifest.resolve(p));
        return std::filesystem::relative(abs, std::filesystem::absolute(out_dir.empty() ? "." : out_dir))
            .generic_string();
      };
      e.degraded_path = rebase(e.degraded_path);
      if (e.clean_path) e.clean_path = rebase(*e.clean_path);
    }
  }
  write_manifest(out_path, entries);
  report.manifest.entries = std::move(entries);
  report.manifest.base_dir = out_dir;
  return report;
}

}  // namespace mtq::oracle
