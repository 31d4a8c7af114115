#include "mtq/evaluate.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/checkpoint.hpp"
#include "mtq/errors.hpp"
#include "mtq/stats.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

namespace mtq::eval {

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

}  // namespace

MetricStats score_metric(const std::vector<double>& predicted, const std::vector<double>& truth) {
  MetricStats s;
  s.mse = stats::mse(predicted, truth);
  try {
    s.lcc = stats::lcc(predicted, truth);
    s.srcc = stats::srcc(predicted, truth);
  } catch (const DegenerateError& e) {
    s.lcc.reset();
    s.srcc.reset();
    s.note = e.what();
  }
  return s;
}

EvalReport evaluate(const MtqNet& model, const Manifest& manifest, const std::string& dataset,
                    const std::string& checkpoint_id) {
  EvalReport r;
  r.dataset = dataset;
  r.checkpoint = checkpoint_id;
  r.config_hash = config_hash(model.config());
  r.timestamp = utc_timestamp();
  for (const ManifestEntry& e : manifest.entries) {
    if (!e.labels) throw ConfigError("evaluation entry " + e.id + " has no primary labels");
  }
  for (const ManifestEntry& e : manifest.entries) {
    PrimaryScores p;
    try {
      std::optional<std::filesystem::path> emb;
      if (model.config().features.ssl) emb = manifest.embedding(e);
      p = predict(model, io::read_wav(manifest.degraded(e)), emb);
    } catch (const Error& ex) {
      r.excluded.push_back({e.id, ex.what()});
      continue;
    }
    r.ids.push_back(e.id);
    const std::array<double, 3> pred{p.smos, p.nmos, p.gmos};
    for (std::size_t k = 0; k < 3; ++k) {
      r.predicted[k].push_back(pred[k]);
      r.truth[k].push_back((*e.labels)[k]);
    }
  }
  const std::size_t total = manifest.entries.size();
  if (static_cast<double>(r.excluded.size()) > kMaxExcludedFraction * static_cast<double>(total)) {
    throw Error("evaluation failed: " + std::to_string(r.excluded.size()) + " of " +
                std::to_string(total) + " entries could not be scored");
  }
  r.n = r.ids.size();
  if (r.n < 2) throw ConfigError("evaluation needs at least 2 scored utterances");
  for (std::size_t k = 0; k < 3; ++k) r.per_metric[k] = score_metric(r.predicted[k], r.truth[k]);
  return r;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
  const MtqNet model = load_model(checkpoint);
  return evaluate(model, read_manifest(manifest), manifest.stem().string(),
                  checkpoint.filename().string() + "@" + file_digest(checkpoint));
}

nlohmann::ordered_json to_json(const EvalReport& r, bool with_timestamp) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["n"] = r.n;
  nlohmann::ordered_json per;
  for (std::size_t k = 0; k < 3; ++k) {
    const MetricStats& s = r.per_metric[k];
    nlohmann::ordered_json m;
    m["lcc"] = optional_number(s.lcc);
    m["srcc"] = optional_number(s.srcc);
    m["mse"] = s.mse;
    if (!s.note.empty()) m["error"] = s.note;
    per[std::string(metric_name(kPrimaryMetrics[k]))] = m;
  }
  j["per_metric"] = per;
  j["checkpoint"] = r.checkpoint;
  if (with_timestamp) j["timestamp"] = r.timestamp;
  j["config_hash"] = r.config_hash;
  j["excluded"] = r.excluded.size();
  if (!r.excluded.empty()) {
    nlohmann::ordered_json ex = nlohmann::ordered_json::array();
    for (const auto& e : r.excluded) ex.push_back({{"id", e.id}, {"error", e.message}});
    j["excluded_entries"] = ex;
  }
  return j;
}

std::string to_table(const EvalReport& r) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %8s %8s %8s\n", "metric", "LCC", "SRCC", "MSE");
  out << line;
  for (std::size_t k = 0; k < 3; ++k) {
    const MetricStats& s = r.per_metric[k];
    std::snprintf(line, sizeof(line), "%-6s %8s %8s %8.4f\n",
                  std::string(metric_name(kPrimaryMetrics[k])).c_str(), fmt(s.lcc).c_str(),
                  fmt(s.srcc).c_str(), s.mse);
    out << line;
  }
  out << "n=" << r.n << " excluded=" << r.excluded.size() << '\n';
  return out.str();
}

std::string csv_header() {
  return "dataset,n,smos_lcc,smos_srcc,smos_mse,nmos_lcc,nmos_srcc,nmos_mse,gmos_lcc,gmos_srcc,"
         "gmos_mse";
}

std::string csv_row(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.dataset << ',' << r.n;
  for (const MetricStats& s : r.per_metric) {
    out << ',';
    if (s.lcc) out << *s.lcc;
    out << ',';
    if (s.srcc) out << *s.srcc;
    out << ',' << s.mse;
  }
  return out.str();
}

std::string config_hash(const MtqNetConfig& config) { return bytes_digest(config.to_json().dump()); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace mtq::eval
