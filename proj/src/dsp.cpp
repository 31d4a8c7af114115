#include "mtq/dsp.hpp"

#include "mtq/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace mtq::dsp {

namespace {

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// Plans are created once per size and executed with the new-array interface,
// which FFTW documents as safe to call concurrently.
class RealFftPlans {
 public:
  ~RealFftPlans() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n, bool inverse = false) {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(n, inverse);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    double* real = fftw_alloc_real(n);
    fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = inverse ? fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, flags)
                             : fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, flags);
    fftw_free(real);
    fftw_free(spec);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::size_t, bool>, fftw_plan> plans_;
};

RealFftPlans& plans() {
  static RealFftPlans instance;
  return instance;
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate_hz != kSampleRate) {
    throw ConfigError("unsupported sample rate " + std::to_string(sample_rate_hz) +
                      " Hz (expected 16000)");
  }
  if (samples.empty()) throw InputTooShortError("input too short: empty waveform");
  for (double s : samples) {
    if (!std::isfinite(s)) throw Error("waveform contains non-finite samples");
  }
}

std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::kRectangular || n < 2) return w;
  const double denom = static_cast<double>(n - 1);
  // Mirrored so the taper is exactly symmetric.
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    w[i] = kind == WindowKind::kHamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
    w[n - 1 - i] = w[i];
  }
  return w;
}

std::size_t frame_count(std::size_t num_samples, std::size_t frame_len, std::size_t hop) {
  if (hop < 1 || frame_len < hop) {
    throw ConfigError("framing requires frame_len >= hop >= 1");
  }
  if (num_samples < frame_len) {
    throw InputTooShortError("input too short: " + std::to_string(num_samples) +
                             " samples for a " + std::to_string(frame_len) + "-sample frame");
  }
  return (num_samples - frame_len + hop - 1) / hop + 1;
}

std::vector<double> pad_tail(std::span<const double> x, std::size_t frame_len,
                             std::size_t hop) {
  const std::size_t frames = frame_count(x.size(), frame_len, hop);
  const std::size_t padded = (frames - 1) * hop + frame_len;
  std::vector<double> out(x.begin(), x.end());
  out.reserve(padded);
  // pad < hop <= len, so the reflection never runs off the front.
  const std::size_t n = x.size();
  for (std::size_t i = 0; out.size() < padded; ++i) out.push_back(x[n - 2 - i]);
  return out;
}

Tensor frame_signal(std::span<const double> x, std::size_t frame_len, std::size_t hop) {
  const std::vector<double> padded = pad_tail(x, frame_len, hop);
  const std::size_t frames = frame_count(x.size(), frame_len, hop);
  Tensor out({frames, frame_len});
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(padded.begin() + static_cast<std::ptrdiff_t>(t * hop), frame_len,
                out.data() + t * frame_len);
  }
  return out;
}

Tensor frame_signal(const Waveform& w, std::size_t frame_len, std::size_t hop) {
  w.validate();
  return frame_signal(std::span<const double>(w.samples), frame_len, hop);
}

std::vector<std::complex<double>> rfft(std::span<const double> frame) {
  const std::size_t n = frame.size();
  if (!is_power_of_two(n)) throw ConfigError("FFT size must be a power of two");
  std::vector<double> in(frame.begin(), frame.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(plans().get(n), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  if (!is_power_of_two(n) || spectrum.size() != n / 2 + 1) {
    throw ConfigError("irfft: spectrum size must be n/2 + 1 for a power-of-two n");
  }
  // c2r overwrites its input.
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plans().get(n, true), reinterpret_cast<fftw_complex*>(in.data()),
                       out.data());
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

SpectralFrames stft_power(std::span<const double> x, std::size_t n_fft, std::size_t hop,
                          std::span<const double> window) {
  if (!is_power_of_two(n_fft)) throw ConfigError("n_fft must be a power of two");
  if (window.size() != n_fft) throw ShapeError("window length must equal n_fft");
  const Tensor frames = frame_signal(x, n_fft, hop);
  const std::size_t num_frames = frames.rows();
  const std::size_t bins = n_fft / 2 + 1;
  SpectralFrames out{Tensor({num_frames, bins}), n_fft, hop};

  fftw_plan plan = plans().get(n_fft);
  std::vector<double> buf(n_fft);
  std::vector<std::complex<double>> spec(bins);
  for (std::size_t t = 0; t < num_frames; ++t) {
    const double* row = frames.data() + t * n_fft;
    for (std::size_t i = 0; i < n_fft; ++i) buf[i] = row[i] * window[i];
    fftw_execute_dft_r2c(plan, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
    for (std::size_t k = 0; k < bins; ++k) out.power.at(t, k) = std::norm(spec[k]);
  }
  return out;
}

SpectralFrames stft_power(const Waveform& w, std::size_t n_fft, std::size_t hop,
                          WindowKind window) {
  w.validate();
  const std::vector<double> win = make_window(window, n_fft);
  return stft_power(std::span<const double>(w.samples), n_fft, hop, win);
}

// ---------------------------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void clamp_sinc_band(double& low_hz, double& band_hz, int sample_rate_hz) {
  const double nyquist = 0.5 * sample_rate_hz;
  low_hz = std::clamp(low_hz, kSincMinLowHz, nyquist - 100.0);
  band_hz = std::clamp(band_hz, kSincMinBandHz, nyquist - low_hz - 50.0);
}

void clamp_sinc_params(SincBandParams& p, int sample_rate_hz) {
  if (p.low_hz.size() != p.band_hz.size()) {
    throw ShapeError("sinc params: low_hz and band_hz differ in length");
  }
  for (std::size_t i = 0; i < p.low_hz.size(); ++i) {
    clamp_sinc_band(p.low_hz[i], p.band_hz[i], sample_rate_hz);
  }
}

SincBandParams mel_sinc_params(std::size_t num_filters, double lo_hz, double hi_hz,
                               std::size_t kernel_len) {
  SincBandParams p;
  p.kernel_len = kernel_len;
  const double mlo = hz_to_mel(lo_hz);
  const double mhi = hz_to_mel(hi_hz);
  for (std::size_t i = 0; i < num_filters; ++i) {
    const double a = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / num_filters);
    const double b = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i + 1) / num_filters);
    p.low_hz.push_back(a);
    p.band_hz.push_back(b - a);
  }
  return p;
}

Tensor sinc_kernels(const SincBandParams& params, int sample_rate_hz) {
  if (params.kernel_len % 2 == 0) throw ConfigError("sinc kernel length must be odd");
  SincBandParams p = params;
  clamp_sinc_params(p, sample_rate_hz);
  const std::size_t len = p.kernel_len;
  const std::vector<double> window = make_window(WindowKind::kHamming, len);
  const double center = 0.5 * static_cast<double>(len - 1);
  const double fs = sample_rate_hz;
  Tensor out({p.num_filters(), len});
  for (std::size_t i = 0; i < p.num_filters(); ++i) {
    const double f1 = p.low_hz[i] / fs;
    const double f2 = (p.low_hz[i] + p.band_hz[i]) / fs;
    for (std::size_t n = 0; n < len; ++n) {
      const double t = static_cast<double>(n) - center;
      double v;
      if (t == 0.0) {
        v = 2.0 * (f2 - f1);
      } else {
        const double w = 2.0 * std::numbers::pi * t;
        v = (std::sin(w * f2) - std::sin(w * f1)) / (std::numbers::pi * t);
      }
      out.at(i, n) = v * window[n];
    }
  }
  return out;
}

}  // namespace mtq::dsp
