#pragma once

#include "mtq/autodiff.hpp"
#include "mtq/dsp.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mtq {

enum class Metric { kSmos = 0, kNmos, kGmos, kPq, kStoi, kSdi };

inline constexpr std::size_t kNumMetrics = 6;
inline constexpr std::array<Metric, kNumMetrics> kAllMetrics = {
    Metric::kSmos, Metric::kNmos, Metric::kGmos, Metric::kPq, Metric::kStoi, Metric::kSdi};
inline constexpr std::array<Metric, 3> kPrimaryMetrics = {Metric::kSmos, Metric::kNmos,
                                                          Metric::kGmos};
inline constexpr std::array<Metric, 3> kPseudoMetrics = {Metric::kPq, Metric::kStoi,
                                                         Metric::kSdi};

std::string_view metric_name(Metric m);
Metric metric_from_name(std::string_view name);
inline std::size_t metric_index(Metric m) { return static_cast<std::size_t>(m); }
bool is_primary(Metric m);

struct ScoreRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct FeatureFlags {
  bool stft = true;
  bool lfb = true;
  bool ssl = false;
};

struct MtqNetConfig {
  std::vector<std::size_t> conv_channels{16, 32, 64, 128};
  std::size_t conv_kernel = 3;
  std::size_t conv_stride_freq = 2;
  std::size_t blstm_hidden = 128;
  std::size_t head_fc_width = 64;
  FeatureFlags features;
  std::size_t emb_dim = 0;
  std::size_t lfb_filters = 64;
  std::size_t lfb_kernel_len = 251;
  double lfb_min_hz = 30.0;
  double lfb_max_hz = 7700.0;
  std::size_t n_fft = dsp::kDefaultNfft;
  std::size_t hop = dsp::kDefaultHop;
  std::array<ScoreRange, kNumMetrics> ranges{
      ScoreRange{1.0, 5.0}, ScoreRange{1.0, 5.0}, ScoreRange{1.0, 5.0},
      ScoreRange{1.0, 4.5}, ScoreRange{0.0, 1.0}, ScoreRange{0.0, 2.0}};

  // Small configuration used by gradient checks and unit tests.
  static MtqNetConfig tiny();
  // Desk-scale configuration for single-core CPU training runs.
  static MtqNetConfig desk();

  void validate() const;
  nlohmann::json to_json() const;
  static MtqNetConfig from_json(const nlohmann::json& j);
};

// Frame-aligned model inputs. power holds the raw STFT power; the model
// compresses it and derives the learnable filterbank stream from it.
struct FeatureBundle {
  Tensor power;                   // [F x n_fft/2+1]
  std::optional<Tensor> ssl;      // [F x emb_dim]

  std::size_t num_frames() const { return power.rows(); }
};

FeatureBundle extract_features(const dsp::Waveform& w, const MtqNetConfig& config,
                               const std::optional<std::filesystem::path>& emb_path = {});

struct HeadOutput {
  std::vector<double> frame_scores;
  double utterance_score = 0.0;
};

struct PredictionSet {
  std::array<HeadOutput, kNumMetrics> heads;
  const HeadOutput& operator[](Metric m) const { return heads[metric_index(m)]; }
};

struct PrimaryScores {
  double smos = 0.0;
  double nmos = 0.0;
  double gmos = 0.0;
};

// Per-head graph outputs. Unevaluated heads hold invalid Vars.
struct HeadVars {
  std::array<nn::Var, kNumMetrics> frame;
  std::array<nn::Var, kNumMetrics> utterance;
};

class MtqNet {
 public:
  static MtqNet build(const MtqNetConfig& config, std::uint64_t seed);

  const MtqNetConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Records the forward pass for the selected heads on g.
  HeadVars forward(nn::Graph& g, const FeatureBundle& features,
                   const std::array<bool, kNumMetrics>& heads) const;
  HeadVars forward(nn::Graph& g, const FeatureBundle& features) const;

  PredictionSet forward(const FeatureBundle& features) const;
  // Primary heads only; the pseudo heads are not evaluated.
  PrimaryScores predict(const FeatureBundle& features) const;

  // Re-applies the sinc cutoff clamping rule to the filterbank parameters.
  void apply_constraints();

  // Encoder output [F x 2H] (shared by all heads).
  nn::Var encode(nn::Graph& g, const FeatureBundle& features) const;

 private:
  MtqNet(MtqNetConfig config, nn::ParamStore params)
      : config_(std::move(config)), params_(std::move(params)) {}

  nn::Var conv_stack(nn::Graph& g, nn::Var image, const std::string& prefix) const;
  nn::Var head(nn::Graph& g, nn::Var encoded, Metric m) const;

  MtqNetConfig config_;
  // Mutable so const forward passes can bind parameters to a graph; the
  // graph never writes parameter values.
  mutable nn::ParamStore params_;
};

PrimaryScores predict(const MtqNet& model, const dsp::Waveform& w,
                      const std::optional<std::filesystem::path>& emb_path = {});

// Feature compression applied to power-like inputs: 0.1 * log(1 + x / 1e-4).
inline constexpr double kPowerCompressInScale = 1e4;
inline constexpr double kPowerCompressOutScale = 0.1;

}  // namespace mtq
