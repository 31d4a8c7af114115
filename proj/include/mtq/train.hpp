#pragma once

#include "mtq/loss.hpp"
#include "mtq/manifest.hpp"
#include "mtq/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mtq::train {

// kTeacher trains on pseudo labels only (the simulated pretrained teacher).
enum class Mode { kScratch, kKt, kMpl, kTeacher };

std::string_view mode_name(Mode m);
Mode mode_from_name(std::string_view name);

struct EpochRecord;

struct TrainConfig {
  Mode mode = Mode::kMpl;
  double lr = 1e-3;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> init_checkpoint;
  double valid_fraction = 0.1;
  // false: train on every entry and validate on the training set itself.
  bool hold_out_validation = true;
  // Stop once the epoch's mean training L_superv (L_semi for the teacher)
  // drops below this value.
  std::optional<double> target_train_loss;
  // Progress hook, called after every epoch; not part of the serialized config.
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
  nlohmann::json to_json() const;
};

// The loss configuration a mode actually trains with: scratch/KT drop L_semi,
// the teacher drops L_superv, MPL keeps both.
LossConfig effective_loss(Mode mode, const LossConfig& base);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
};

// Seeded shuffle of [0, n); the first max(1, round(fraction * n)) indices go
// to validation. Requires n >= 2.
Split split_indices(std::size_t n, double valid_fraction, std::uint64_t seed);

// Labels of an entry with every target clipped to its head range.
LabelSet labels_for(const ManifestEntry& e, const MtqNetConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;
  LossBreakdown valid;
  bool best_so_far = false;
};

nlohmann::json to_json(const LossBreakdown& b);
nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  MtqNet model;  // best checkpoint (by validation criterion)
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<std::string> init_digest;
  std::size_t label_warnings = 0;
  nlohmann::json metadata;
};

TrainResult train(const MtqNetConfig& model_config, const Manifest& manifest,
                  const LossConfig& loss, const TrainConfig& tc);

// Teacher pretraining: train with mode forced to kTeacher.
TrainResult pretrain_teacher(const MtqNetConfig& model_config, const Manifest& manifest,
                             const LossConfig& loss, TrainConfig tc);

// Writes model.mtqc and history.jsonl into dir; returns the checkpoint path.
std::filesystem::path write_training_outputs(const TrainResult& r,
                                             const std::filesystem::path& dir);

}  // namespace mtq::train
