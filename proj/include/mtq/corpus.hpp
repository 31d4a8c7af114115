#pragma once

#include "mtq/dsp.hpp"
#include "mtq/manifest.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mtq::corpus {

enum class NoiseType { kWhite, kPink, kModulatedTonal };
enum class Enhancer { kNone, kSpectralSubtraction, kWienerGain, kHardClip, kLowpass };

std::string_view noise_name(NoiseType n);
std::string_view enhancer_name(Enhancer e);
NoiseType noise_from_name(std::string_view name);
Enhancer enhancer_from_name(std::string_view name);

struct CorpusConfig {
  std::size_t num_train = 300;
  std::size_t num_test = 100;
  double duration_s = 2.0;
  std::vector<NoiseType> noise_types{NoiseType::kWhite, NoiseType::kPink,
                                     NoiseType::kModulatedTonal};
  std::vector<double> snr_db_grid{-5.0, 0.0, 5.0, 10.0, 15.0};
  std::vector<Enhancer> enhancers{Enhancer::kNone, Enhancer::kSpectralSubtraction,
                                  Enhancer::kWienerGain, Enhancer::kHardClip, Enhancer::kLowpass};
  // Adds an unprocessed clean cell (degraded == clean) to the condition grid.
  bool include_clean = true;
  std::uint64_t seed = 7;

  void validate() const;
};

enum class Split : std::uint64_t { kTrain = 1, kTest = 2 };

// Seed of the clean signal for (corpus seed, split, index); distinct splits
// never share a clean signal.
std::uint64_t utterance_seed(std::uint64_t seed, Split split, std::size_t index);

// Speech surrogate: 3-5 harmonics of a slowly drifting 100-250 Hz fundamental
// plus tilted aspiration noise, under a 2-6 Hz syllabic envelope with a
// leading pause and 1-2 inner pauses; peak-normalized to 0.5.
dsp::Waveform synth_clean(double duration_s, std::uint64_t utterance_seed);

struct Condition {
  bool clean = false;
  NoiseType noise = NoiseType::kWhite;
  double snr_db = 0.0;
  Enhancer enhancer = Enhancer::kNone;

  std::string tag() const;
};

std::vector<Condition> condition_grid(const CorpusConfig& cfg);

std::vector<double> make_noise(NoiseType type, std::size_t n, std::uint64_t seed);

// Adds noise scaled to snr_db (energy ratio, before enhancement) and applies
// the enhancer.
dsp::Waveform degrade(const dsp::Waveform& clean, NoiseType noise, double snr_db,
                      Enhancer enhancer, std::uint64_t noise_seed);

std::vector<double> apply_enhancer(Enhancer e, std::span<const double> noisy,
                                   int sample_rate_hz);

// Segmental SNR (dB) of clean against degraded - clean, frames clamped to
// [-5, 20] dB, averaged over speech-active frames.
double residual_segmental_snr(const dsp::Waveform& clean, const dsp::Waveform& degraded);

// Synthetic S/N/G ground truth.
std::array<double, 3> assign_proxy_truth(const dsp::Waveform& clean,
                                         const dsp::Waveform& degraded);

struct CorpusPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

CorpusPaths build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mtq::corpus
