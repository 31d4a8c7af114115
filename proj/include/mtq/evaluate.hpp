#pragma once

#include "mtq/manifest.hpp"
#include "mtq/model.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mtq::eval {

struct MetricStats {
  std::optional<double> lcc;
  std::optional<double> srcc;
  double mse = 0.0;
  std::string note;  // set when a correlation is undefined
};

struct ExcludedEntry {
  std::string id;
  std::string message;
};

struct EvalReport {
  std::string dataset;
  std::size_t n = 0;
  std::array<MetricStats, 3> per_metric;  // smos, nmos, gmos
  std::string checkpoint;
  std::string config_hash;
  std::string timestamp;
  std::vector<ExcludedEntry> excluded;
  // Per-utterance predictions and truths in manifest order (evaluated entries only).
  std::vector<std::string> ids;
  std::array<std::vector<double>, 3> predicted;
  std::array<std::vector<double>, 3> truth;
};

inline constexpr double kMaxExcludedFraction = 0.05;

// Statistics of one predicted/truth sequence pair; correlations are left
// empty with a note when either side is constant.
MetricStats score_metric(const std::vector<double>& predicted, const std::vector<double>& truth);

// Runs predict on every entry; unreadable entries are excluded and counted.
// Throws Error when more than 5% are excluded, ConfigError when an entry
// lacks primary labels.
EvalReport evaluate(const MtqNet& model, const Manifest& manifest, const std::string& dataset,
                    const std::string& checkpoint_id);
EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest);

// with_timestamp=false omits the timestamp so reports are byte-stable.
nlohmann::ordered_json to_json(const EvalReport& r, bool with_timestamp = true);
std::string to_table(const EvalReport& r);
std::string csv_header();
std::string csv_row(const EvalReport& r);

std::string config_hash(const MtqNetConfig& config);
std::string utc_timestamp();

}  // namespace mtq::eval
