#include "mtq/oracle.hpp"

#include "mtq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mtq::oracle {

namespace {

// STOI constants.
constexpr int kStoiFs = 10000;
constexpr int kStoiFrameLen = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiNfft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;
constexpr double kDynRangeDb = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// pq_proxy constants.
constexpr double kPqSnrMin = -10.0;
constexpr double kPqSnrMax = 35.0;
constexpr double kPqWeightExponent = 0.2;
constexpr double kPqPowerFloor = 1e-12;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

// Hann taper without the zero endpoints (length n taken from n + 2 points).
std::vector<double> inner_hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  }
  return w;
}

double energy(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

// Drops frames whose clean energy is more than dyn_range dB below the loudest
// clean frame, then overlap-adds the surviving frames of both signals.
std::pair<std::vector<double>, std::vector<double>> remove_silent_frames(
    const std::vector<double>& x, const std::vector<double>& y) {
  const std::vector<double> w = inner_hann(kStoiFrameLen);
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kStoiFrameLen <= x.size(); i += kStoiHop) starts.push_back(i);
  if (starts.empty()) throw InputTooShortError("insufficient speech: signal shorter than a frame");

  std::vector<double> level(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (int n = 0; n < kStoiFrameLen; ++n) {
      const double v = w[n] * x[starts[f] + n];
      e += v * v;
    }
    level[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double max_level = *std::max_element(level.begin(), level.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (max_level - kDynRangeDb - level[f] < 0.0) kept.push_back(starts[f]);
  }
  if (kept.empty()) throw InputTooShortError("insufficient speech: clean signal is silent");

  const std::size_t out_len = (kept.size() - 1) * kStoiHop + kStoiFrameLen;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t f = 0; f < kept.size(); ++f) {
    for (int n = 0; n < kStoiFrameLen; ++n) {
      xs[f * kStoiHop + n] += w[n] * x[kept[f] + n];
      ys[f * kStoiHop + n] += w[n] * y[kept[f] + n];
    }
  }
  return {std::move(xs), std::move(ys)};
}

// Third-octave band magnitudes [bands][frames].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x,
                                                const std::vector<std::vector<double>>& obm) {
  const std::vector<double> w = inner_hann(kStoiFrameLen);
  std::vector<double> frame(kStoiNfft, 0.0);
  std::vector<std::vector<double>> out(obm.size());
  // Frames start at 0, hop, ... strictly before len - frame_len.
  for (std::size_t i = 0; i + kStoiFrameLen < x.size(); i += kStoiHop) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int n = 0; n < kStoiFrameLen; ++n) frame[n] = w[n] * x[i + n];
    const auto spec = dsp::rfft(frame);
    for (std::size_t b = 0; b < obm.size(); ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k) {
        if (obm[b][k] != 0.0) acc += std::norm(spec[k]);
      }
      out[b].push_back(std::sqrt(acc));
    }
  }
  return out;
}

void check_reference(const dsp::Waveform& clean) {
  if (energy(clean.samples) <= 0.0) {
    throw DegenerateError("degenerate reference: clean signal has zero energy");
  }
}

}  // namespace

std::vector<double> resample_poly(std::span<const double> x, int up, int down) {
  if (up < 1 || down < 1) throw ConfigError("resample factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return {x.begin(), x.end()};
  const int max_rate = std::max(up, down);
  const int half_len = 10 * max_rate;
  const int ntaps = 2 * half_len + 1;
  const double cutoff = 1.0 / max_rate;  // relative to Nyquist
  const double beta = 5.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);

  std::vector<double> h(ntaps);
  double sum = 0.0;
  for (int n = 0; n < ntaps; ++n) {
    const double m = n - half_len;
    const double r = 2.0 * n / (ntaps - 1) - 1.0;
    const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0_beta;
    h[n] = cutoff * sinc(cutoff * m) * kaiser;
    sum += h[n];
  }
  for (double& v : h) v *= up / sum;

  const auto n_in = static_cast<long>(x.size());
  const long n_out = (n_in * up + down - 1) / down;
  std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
  for (long m = 0; m < n_out; ++m) {
    const long u = m * down + half_len;
    double acc = 0.0;
    for (long j = u % up; j < ntaps; j += up) {
      const long k = (u - j) / up;
      if (k >= 0 && k < n_in) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(k)];
    }
    y[static_cast<std::size_t>(m)] = acc;
  }
  return y;
}

PairedUtterance PairedUtterance::make(dsp::Waveform clean, dsp::Waveform degraded) {
  clean.validate();
  degraded.validate();
  if (clean.sample_rate_hz != degraded.sample_rate_hz) {
    throw ConfigError("paired signals have different sample rates");
  }
  const std::size_t longer = std::max(clean.size(), degraded.size());
  const std::size_t shorter = std::min(clean.size(), degraded.size());
  if (static_cast<double>(longer - shorter) > 0.05 * static_cast<double>(longer)) {
    throw ConfigError("paired signals differ in length by more than 5% (" +
                      std::to_string(clean.size()) + " vs " + std::to_string(degraded.size()) +
                      " samples)");
  }
  clean.samples.resize(shorter);
  degraded.samples.resize(shorter);
  return {std::move(clean), std::move(degraded)};
}

std::vector<std::vector<double>> third_octave_bands(int fs, int nfft, int num_bands,
                                                    double min_freq) {
  const int bins = nfft / 2 + 1;
  std::vector<double> f(bins);
  for (int k = 0; k < bins; ++k) f[k] = static_cast<double>(fs) * k / nfft;
  auto nearest = [&](double target) {
    int best = 0;
    for (int k = 1; k < bins; ++k) {
      if ((f[k] - target) * (f[k] - target) < (f[best] - target) * (f[best] - target)) best = k;
    }
    return best;
  };
  std::vector<std::vector<double>> obm(num_bands, std::vector<double>(bins, 0.0));
  for (int b = 0; b < num_bands; ++b) {
    const int lo = nearest(min_freq * std::pow(2.0, (2.0 * b - 1.0) / 6.0));
    const int hi = nearest(min_freq * std::pow(2.0, (2.0 * b + 1.0) / 6.0));
    for (int k = lo; k < hi; ++k) obm[b][k] = 1.0;
  }
  return obm;
}

double stoi(const PairedUtterance& pair) {
  const auto x10 = resample_poly(pair.clean.samples, kStoiFs, pair.clean.sample_rate_hz);
  const auto y10 = resample_poly(pair.degraded.samples, kStoiFs, pair.degraded.sample_rate_hz);
  const auto [x, y] = remove_silent_frames(x10, y10);

  static const auto obm = third_octave_bands(kStoiFs, kStoiNfft, kStoiBands, kStoiMinFreq);
  const auto xb = band_envelopes(x, obm);
  const auto yb = band_envelopes(y, obm);
  const std::size_t frames = xb.front().size();
  if (frames < kStoiSegment) {
    throw InputTooShortError("insufficient speech: " + std::to_string(frames) +
                             " frames after silence removal, need " +
                             std::to_string(kStoiSegment));
  }

  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  const std::size_t segments = frames - kStoiSegment + 1;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  double total = 0.0;
  for (std::size_t m = 0; m < segments; ++m) {
    for (std::size_t b = 0; b < xb.size(); ++b) {
      std::copy_n(xb[b].begin() + static_cast<std::ptrdiff_t>(m), kStoiSegment, xs.begin());
      std::copy_n(yb[b].begin() + static_cast<std::ptrdiff_t>(m), kStoiSegment, ys.begin());
      const double scale = std::sqrt(energy(xs)) / (std::sqrt(energy(ys)) + kEps);
      for (int n = 0; n < kStoiSegment; ++n) {
        ys[n] = std::min(ys[n] * scale, xs[n] * (1.0 + clip));
      }
      const double xm = std::accumulate(xs.begin(), xs.end(), 0.0) / kStoiSegment;
      const double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / kStoiSegment;
      for (int n = 0; n < kStoiSegment; ++n) {
        xs[n] -= xm;
        ys[n] -= ym;
      }
      const double xn = std::sqrt(energy(xs)) + kEps;
      const double yn = std::sqrt(energy(ys)) + kEps;
      double corr = 0.0;
      for (int n = 0; n < kStoiSegment; ++n) corr += (xs[n] / xn) * (ys[n] / yn);
      total += corr;
    }
  }
  const double d = total / static_cast<double>(segments * xb.size());
  return std::clamp(d, 0.0, 1.0);
}

double sdi(const PairedUtterance& pair) {
  check_reference(pair.clean);
  double num = 0.0;
  for (std::size_t i = 0; i < pair.clean.size(); ++i) {
    const double e = pair.degraded.samples[i] - pair.clean.samples[i];
    num += e * e;
  }
  return num / energy(pair.clean.samples);
}

double pq_map(double snr_mean_db) {
  return std::clamp(1.0 + 3.5 * (snr_mean_db + 10.0) / 45.0, 1.0, 4.5);
}

double pq_proxy(const PairedUtterance& pair) {
  check_reference(pair.clean);
  std::vector<double> diff(pair.clean.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = pair.degraded.samples[i] - pair.clean.samples[i];
  }
  const auto clean = dsp::stft_power(pair.clean);
  const auto noise = dsp::stft_power(dsp::Waveform{diff, pair.clean.sample_rate_hz});
  const std::size_t frames = clean.num_frames();
  const std::size_t bins = clean.num_bins();

  std::vector<double> frame_energy(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) frame_energy[t] += clean.power.at(t, k);
  }
  const double max_energy = *std::max_element(frame_energy.begin(), frame_energy.end());
  const double floor = max_energy * std::pow(10.0, -kDynRangeDb / 10.0);

  double snr_sum = 0.0;
  std::size_t active = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (frame_energy[t] <= 0.0 || frame_energy[t] < floor) continue;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double pc = clean.power.at(t, k);
      const double weight = std::pow(pc, kPqWeightExponent);
      num += weight * pc;
      den += weight * std::max(noise.power.at(t, k), kPqPowerFloor);
    }
    const double snr = 10.0 * std::log10(num / den);
    snr_sum += std::clamp(snr, kPqSnrMin, kPqSnrMax);
    ++active;
  }
  if (active == 0) throw DegenerateError("degenerate reference: no speech-active frames");
  return pq_map(snr_sum / static_cast<double>(active));
}

OracleScores score_pair(const PairedUtterance& pair) {
  return {pq_proxy(pair), stoi(pair), sdi(pair)};
}

}  // namespace mtq::oracle
