#pragma once

#include "mtq/tensor.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mtq::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kDefaultNfft = 512;
inline constexpr std::size_t kDefaultHop = 256;

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;

  // Throws ConfigError on a non-16 kHz rate, InputTooShortError when empty,
  // Error on non-finite samples.
  void validate() const;
  std::size_t size() const { return samples.size(); }
};

struct SpectralFrames {
  Tensor power;  // [num_frames x num_bins]
  std::size_t frame_len_samples = 0;
  std::size_t frame_hop_samples = 0;

  std::size_t num_frames() const { return power.rows(); }
  std::size_t num_bins() const { return power.cols(); }
};

enum class WindowKind { kRectangular, kHamming, kHann };

std::vector<double> make_window(WindowKind kind, std::size_t n);

// Number of frames after the tail padding policy is applied.
std::size_t frame_count(std::size_t num_samples, std::size_t frame_len, std::size_t hop);

// Reflect-pads the tail so the last partial frame becomes a full one.
std::vector<double> pad_tail(std::span<const double> x, std::size_t frame_len, std::size_t hop);

// [num_frames x frame_len] matrix of overlapping frames.
Tensor frame_signal(std::span<const double> x, std::size_t frame_len, std::size_t hop);
Tensor frame_signal(const Waveform& w, std::size_t frame_len, std::size_t hop);

// One-sided spectrum (n/2 + 1 bins) of a real frame; n must be a power of two.
std::vector<std::complex<double>> rfft(std::span<const double> frame);
// Inverse of rfft for an n-point signal (scaled so irfft(rfft(x)) == x).
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

SpectralFrames stft_power(std::span<const double> x, std::size_t n_fft, std::size_t hop,
                          std::span<const double> window);
SpectralFrames stft_power(const Waveform& w, std::size_t n_fft = kDefaultNfft,
                          std::size_t hop = kDefaultHop, WindowKind window = WindowKind::kHamming);

// ---------------------------------------------------------------------------
// Sinc band-pass filterbank

struct SincBandParams {
  std::vector<double> low_hz;
  std::vector<double> band_hz;
  std::size_t kernel_len = 251;

  std::size_t num_filters() const { return low_hz.size(); }
};

inline constexpr double kSincMinLowHz = 30.0;
inline constexpr double kSincMinBandHz = 30.0;

// Applies the cutoff clamping rule in place:
//   low  in [30, fs/2 - 100],  band in [30, fs/2 - low - 50].
void clamp_sinc_band(double& low_hz, double& band_hz, int sample_rate_hz);
void clamp_sinc_params(SincBandParams& p, int sample_rate_hz);

// Mel-spaced bands between lo_hz and hi_hz.
SincBandParams mel_sinc_params(std::size_t num_filters, double lo_hz, double hi_hz,
                               std::size_t kernel_len);

// [num_filters x kernel_len] band-pass kernels after clamping.
Tensor sinc_kernels(const SincBandParams& p, int sample_rate_hz);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace mtq::dsp
