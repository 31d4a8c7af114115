#include "mtq/train.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/checkpoint.hpp"
#include "mtq/errors.hpp"
#include "mtq/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace mtq::train {

namespace {

// Uniform integer in [0, bound) from raw engine output, so the draw does not
// depend on the standard library's distribution implementation.
std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::min(bound - 1, static_cast<std::size_t>(u * static_cast<double>(bound)));
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_below(rng, i)]);
}

LossBreakdown& accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  for (std::size_t k = 0; k < kNumMetrics; ++k) acc.per_metric[k] += b.per_metric[k];
  acc.superv += b.superv;
  acc.semi += b.semi;
  acc.objective += b.objective;
  return acc;
}

LossBreakdown scaled(LossBreakdown b, double s) {
  for (double& v : b.per_metric) v *= s;
  b.superv *= s;
  b.semi *= s;
  b.objective *= s;
  return b;
}

double selection_loss(Mode mode, const LossBreakdown& b) {
  return mode == Mode::kTeacher ? b.semi : b.superv;
}

void check_labels(const Manifest& m, Mode mode) {
  const bool need_primary = mode != Mode::kTeacher;
  const bool need_pseudo = mode == Mode::kMpl || mode == Mode::kTeacher;
  for (const ManifestEntry& e : m.entries) {
    if (need_primary && !e.labels) {
      throw ConfigError("mode " + std::string(mode_name(mode)) + " needs primary labels; entry " +
                        e.id + " has none");
    }
    if (need_pseudo && !e.pseudo) {
      throw ConfigError("mode " + std::string(mode_name(mode)) + " needs pseudo labels; entry " +
                        e.id + " has none");
    }
  }
}

}  // namespace

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kScratch: return "scratch";
    case Mode::kKt: return "kt";
    case Mode::kMpl: return "mpl";
    case Mode::kTeacher: return "teacher";
  }
  return "mpl";
}

Mode mode_from_name(std::string_view name) {
  for (Mode m : {Mode::kScratch, Mode::kKt, Mode::kMpl, Mode::kTeacher}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown training mode: " + std::string(name));
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must lie in (0, 1)");
  }
  if (mode == Mode::kKt && !init_checkpoint) {
    throw ConfigError("mode kt requires an init checkpoint (the teacher)");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"mode", mode_name(mode)},
                      {"lr", lr},
                      {"max_epochs", max_epochs},
                      {"patience", patience},
                      {"seed", seed},
                      {"valid_fraction", valid_fraction},
                      {"hold_out_validation", hold_out_validation}};
  j["init_checkpoint"] = init_checkpoint ? nlohmann::json(init_checkpoint->string()) : nullptr;
  j["target_train_loss"] = target_train_loss ? nlohmann::json(*target_train_loss) : nullptr;
  return j;
}

LossConfig effective_loss(Mode mode, const LossConfig& base) {
  LossConfig c = base;
  c.superv_enabled = mode != Mode::kTeacher;
  c.semi_enabled = mode == Mode::kMpl || mode == Mode::kTeacher;
  return c;
}

Split split_indices(std::size_t n, double valid_fraction, std::uint64_t seed) {
  if (n < 2) throw ConfigError("need at least 2 utterances to split train/valid");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  shuffle(idx, rng);
  const auto n_valid = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n))), 1, n - 1);
  Split s;
  s.valid.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_valid));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_valid), idx.end());
  return s;
}

LabelSet labels_for(const ManifestEntry& e, const MtqNetConfig& config) {
  auto clip = [&](std::array<double, 3> v, const std::array<Metric, 3>& metrics) {
    for (std::size_t k = 0; k < 3; ++k) {
      const ScoreRange r = config.ranges[metric_index(metrics[k])];
      v[k] = std::clamp(v[k], r.lo, r.hi);
    }
    return v;
  };
  LabelSet s;
  if (e.labels) s.primary = clip(*e.labels, kPrimaryMetrics);
  if (e.pseudo) s.pseudo = clip(*e.pseudo, kPseudoMetrics);
  return s;
}

nlohmann::json to_json(const LossBreakdown& b) {
  nlohmann::json j;
  for (Metric m : kAllMetrics) j[std::string(metric_name(m))] = b[m];
  j["superv"] = b.superv;
  j["semi"] = b.semi;
  j["objective"] = b.objective;
  return j;
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train", to_json(r.train)},
          {"valid", to_json(r.valid)},
          {"best_so_far", r.best_so_far}};
}

TrainResult train(const MtqNetConfig& model_config, const Manifest& manifest,
                  const LossConfig& base_loss, const TrainConfig& tc) {
  tc.validate();
  base_loss.validate();
  model_config.validate();
  check_labels(manifest, tc.mode);
  const LossConfig loss = effective_loss(tc.mode, base_loss);
  const auto heads = required_heads(loss);

  MtqNet model = MtqNet::build(model_config, tc.seed);
  std::optional<std::string> init_digest;
  if (tc.init_checkpoint) {
    load_weights_into(model, *tc.init_checkpoint);
    init_digest = file_digest(*tc.init_checkpoint);
  }

  const std::size_t n = manifest.entries.size();
  std::vector<FeatureBundle> features;
  std::vector<LabelSet> labels;
  features.reserve(n);
  for (const ManifestEntry& e : manifest.entries) {
    std::optional<std::filesystem::path> emb;
    if (model_config.features.ssl) emb = manifest.embedding(e);
    features.push_back(extract_features(io::read_wav(manifest.degraded(e)), model_config, emb));
    labels.push_back(labels_for(e, model_config));
  }

  Split split;
  if (tc.hold_out_validation) {
    split = split_indices(n, tc.valid_fraction, tc.seed);
  } else {
    split.train.resize(n);
    std::iota(split.train.begin(), split.train.end(), 0);
    split.valid = split.train;
  }
  std::vector<LabelSet> valid_labels;
  for (std::size_t i : split.valid) valid_labels.push_back(labels[i]);

  TrainResult result{model, {}, 0, init_digest, 0, {}};
  const nn::AdamConfig adam{tc.lr};
  std::uint64_t step = 0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  std::vector<std::size_t> order = split.train;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::mt19937_64 rng(tc.seed ^ (0x9e3779b97f4a7c15ull * epoch));
    shuffle(order, rng);

    LossBreakdown train_sum;
    for (std::size_t i : order) {
      nn::Graph g;
      const HeadVars hv = model.forward(g, features[i], heads);
      const GraphObjective obj = total_objective(g, std::span(&labels[i], 1), std::span(&hv, 1),
                                                 loss, &result.label_warnings);
      if (!std::isfinite(obj.values.objective)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch));
      }
      model.params().zero_grad();
      g.backward(obj.objective);
      nn::adam_step(model.params(), adam, ++step, [&] { model.apply_constraints(); });
      accumulate(train_sum, obj.values);
    }

    std::vector<PredictionSet> preds;
    preds.reserve(split.valid.size());
    for (std::size_t i : split.valid) preds.push_back(model.forward(features[i]));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = scaled(train_sum, 1.0 / static_cast<double>(order.size()));
    rec.valid = total_objective(valid_labels, preds, loss);
    const double crit = selection_loss(tc.mode, rec.valid);
    if (crit < best) {
      best = crit;
      wait = 0;
      rec.best_so_far = true;
      result.model = model;
      result.best_epoch = epoch;
    } else {
      ++wait;
    }
    result.history.push_back(rec);
    if (tc.on_epoch) tc.on_epoch(rec);

    if (tc.target_train_loss && selection_loss(tc.mode, rec.train) < *tc.target_train_loss) break;
    if (!rec.best_so_far && wait >= tc.patience) break;
  }

  result.metadata = {{"train_config", tc.to_json()},
                     {"loss",
                      {{"kind", loss_kind_name(loss.kind)},
                       {"delta", loss.delta},
                       {"frame_weight", loss.frame_weight},
                       {"superv_enabled", loss.superv_enabled},
                       {"semi_enabled", loss.semi_enabled}}},
                     {"epochs_run", result.history.size()},
                     {"best_epoch", result.best_epoch},
                     {"best_valid", best},
                     {"num_train", split.train.size()},
                     {"num_valid", split.valid.size()}};
  result.metadata["init_digest"] = init_digest ? nlohmann::json(*init_digest) : nullptr;
  return result;
}

TrainResult pretrain_teacher(const MtqNetConfig& model_config, const Manifest& manifest,
                             const LossConfig& loss, TrainConfig tc) {
  tc.mode = Mode::kTeacher;
  return train(model_config, manifest, loss, tc);
}

std::filesystem::path write_training_outputs(const TrainResult& r,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto ckpt = dir / "model.mtqc";
  save_model(ckpt, r.model, r.metadata);
  std::ofstream out(dir / "history.jsonl", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "history.jsonl").string());
  for (const EpochRecord& rec : r.history) out << to_json(rec).dump() << '\n';
  if (!out) throw IoError("write failed: " + (dir / "history.jsonl").string());
  return ckpt;
}

}  // namespace mtq::train
