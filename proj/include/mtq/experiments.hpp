#pragma once

#include "mtq/evaluate.hpp"
#include "mtq/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace mtq::experiments {

struct RunSpec {
  MtqNetConfig model;
  train::LossConfig loss;
  train::TrainConfig train;
};

struct RunOutputs {
  std::filesystem::path checkpoint;
  train::TrainResult result;
  eval::EvalReport report;
};

// Trains, writes model.mtqc + history.jsonl + report.json into dir, and
// evaluates the best checkpoint on the test manifest.
RunOutputs train_and_evaluate(const Manifest& train_set, const Manifest& test_set,
                              const RunSpec& spec, const std::filesystem::path& dir);

inline const std::vector<double> kDeltaGrid{0.5, 0.75, 1.0, 1.25};

struct SweepRow {
  double delta = 0.0;
  std::array<std::optional<double>, 3> srcc;  // smos, nmos, gmos
};

// One MPL run per delta with the shared seed; writes delta_<d>/ run
// directories and sweep.csv into out_dir.
std::vector<SweepRow> sweep_delta(const Manifest& train_set, const Manifest& test_set,
                                  const RunSpec& base, const std::vector<double>& deltas,
                                  const std::filesystem::path& out_dir);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Pretrains the teacher, then runs scratch, KT and MPL (KT and MPL from the
// teacher checkpoint) and writes compare.json; returns the same report.
nlohmann::ordered_json compare_modes(const Manifest& train_set, const Manifest& test_set,
                                     const RunSpec& base, const std::filesystem::path& out_dir);

}  // namespace mtq::experiments
