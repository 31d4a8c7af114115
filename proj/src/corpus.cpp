#include "mtq/corpus.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/errors.hpp"
#include "mtq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <numeric>

namespace mtq::corpus {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Small deterministic generator; draws do not depend on standard-library
// distribution implementations.
class Random {
 public:
  explicit Random(std::uint64_t seed) : state_(seed) {}

  double uniform() {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::uint64_t state_;
};

double energy(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

double rms(std::span<const double> x) {
  return x.empty() ? 0.0 : std::sqrt(energy(x) / static_cast<double>(x.size()));
}

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad lowpass_biquad(double fc, double q, double fs) {
  const double w0 = 2.0 * kPi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

std::vector<double> filter(const Biquad& f, std::span<const double> x) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = f.b0 * x[i] + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = v;
    y[i] = v;
  }
  return y;
}

// Short-time spectral gain processing with sqrt-Hann analysis/synthesis at
// 50% overlap; gain_fn maps (noisy power, noise power estimate) -> gain.
template <typename GainFn>
std::vector<double> spectral_gain(std::span<const double> x, int fs, GainFn gain_fn) {
  constexpr std::size_t n = 512;
  constexpr std::size_t hop = 256;
  std::vector<double> win(n);
  for (std::size_t i = 0; i < n; ++i) win[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * kPi * i / n));

  std::vector<double> padded(hop, 0.0);
  padded.insert(padded.end(), x.begin(), x.end());
  while ((padded.size() - n) % hop != 0 || padded.size() < x.size() + n + hop) padded.push_back(0.0);
  const std::size_t frames = (padded.size() - n) / hop + 1;

  std::vector<std::vector<std::complex<double>>> spec(frames);
  std::vector<double> frame(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) frame[i] = padded[t * hop + i] * win[i];
    spec[t] = dsp::rfft(frame);
  }

  // Noise estimate: frames lying entirely inside the first 200 ms.
  const std::size_t lead = static_cast<std::size_t>(0.2 * fs);
  std::vector<double> noise(n / 2 + 1, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    if (start < hop || start + n > hop + lead) continue;
    for (std::size_t k = 0; k < noise.size(); ++k) noise[k] += std::norm(spec[t][k]);
    ++count;
  }
  if (count > 0) {
    for (double& v : noise) v /= static_cast<double>(count);
  }

  std::vector<double> out(padded.size(), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < noise.size(); ++k) {
      spec[t][k] *= gain_fn(std::norm(spec[t][k]), noise[k]);
    }
    const std::vector<double> y = dsp::irfft(spec[t], n);
    for (std::size_t i = 0; i < n; ++i) out[t * hop + i] += y[i] * win[i];
  }
  return {out.begin() + hop, out.begin() + static_cast<std::ptrdiff_t>(hop + x.size())};
}

std::vector<double> quantize16(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(std::round(x[i] * 32768.0), -32768.0, 32767.0) / 32768.0;
  }
  return out;
}

std::string format_snr(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+gdB", snr);
  return buf;
}

}  // namespace

std::string_view noise_name(NoiseType n) {
  switch (n) {
    case NoiseType::kWhite: return "white";
    case NoiseType::kPink: return "pink";
    case NoiseType::kModulatedTonal: return "modulated-tonal";
  }
  return "white";
}

std::string_view enhancer_name(Enhancer e) {
  switch (e) {
    case Enhancer::kNone: return "none";
    case Enhancer::kSpectralSubtraction: return "spectral-subtraction";
    case Enhancer::kWienerGain: return "wiener-gain";
    case Enhancer::kHardClip: return "hard-clip";
    case Enhancer::kLowpass: return "lowpass";
  }
  return "none";
}

NoiseType noise_from_name(std::string_view name) {
  for (auto n : {NoiseType::kWhite, NoiseType::kPink, NoiseType::kModulatedTonal}) {
    if (noise_name(n) == name) return n;
  }
  throw ConfigError("unknown noise type: " + std::string(name));
}

Enhancer enhancer_from_name(std::string_view name) {
  for (auto e : {Enhancer::kNone, Enhancer::kSpectralSubtraction, Enhancer::kWienerGain,
                 Enhancer::kHardClip, Enhancer::kLowpass}) {
    if (enhancer_name(e) == name) return e;
  }
  throw ConfigError("unknown enhancer: " + std::string(name));
}

void CorpusConfig::validate() const {
  if (noise_types.empty() || snr_db_grid.empty() || enhancers.empty()) {
    throw ConfigError("corpus config: condition grids must be nonempty");
  }
  if (duration_s < 1.0) throw ConfigError("corpus config: duration must be >= 1 s");
  if (num_train == 0) throw ConfigError("corpus config: num_train must be positive");
  for (double s : snr_db_grid) {
    if (!std::isfinite(s)) throw ConfigError("corpus config: SNR values must be finite");
  }
}

std::uint64_t utterance_seed(std::uint64_t seed, Split split, std::size_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(split) << 40 ^ index));
}

dsp::Waveform synth_clean(double duration_s, std::uint64_t seed) {
  const int fs = dsp::kSampleRate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  Random rng(seed);

  const double f0 = rng.uniform(100.0, 250.0);
  const int harmonics = rng.integer(3, 5);
  const double syllable_rate = rng.uniform(2.0, 6.0);
  const double syllable_phase = rng.uniform(0.0, 2.0 * kPi);
  const double drift_phase = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> partial_phase(harmonics);
  for (double& p : partial_phase) p = rng.uniform(0.0, 2.0 * kPi);

  // Pause mask: leading 250 ms plus 1-2 inner pauses, 10 ms raised-cosine ramps.
  std::vector<std::pair<double, double>> pauses{{0.0, 0.25}};
  const int inner = rng.integer(1, 2);
  for (int i = 0; i < inner; ++i) {
    const double len = rng.uniform(0.12, 0.25);
    const double start = rng.uniform(0.4, std::max(0.41, duration_s - 0.3 - len));
    pauses.emplace_back(start, start + len);
  }
  auto mask = [&](double t) {
    constexpr double ramp = 0.01;
    double m = 1.0;
    for (const auto& [a, b] : pauses) {
      if (t >= a && t <= b) return 0.0;
      if (t > b && t < b + ramp) m = std::min(m, 0.5 - 0.5 * std::cos(kPi * (t - b) / ramp));
      if (t < a && t > a - ramp) m = std::min(m, 0.5 - 0.5 * std::cos(kPi * (a - t) / ramp));
    }
    return m;
  };

  std::vector<double> voiced(n), aspiration(n);
  double phase = 0.0, lp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + 0.06 * std::sin(2.0 * kPi * 0.8 * t + drift_phase));
    phase += 2.0 * kPi * f / fs;
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) v += std::sin(h * phase + partial_phase[h - 1]) / h;
    voiced[i] = v;
    lp = 0.6 * lp + rng.gaussian();
    aspiration[i] = lp;
  }
  const double asp_gain = 0.25 * rms(voiced) / std::max(rms(aspiration), 1e-12);

  dsp::Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double env = 0.1 + 0.9 * (0.5 - 0.5 * std::cos(2.0 * kPi * syllable_rate * t + syllable_phase));
    w.samples[i] = env * mask(t) * (voiced[i] + asp_gain * aspiration[i]);
  }
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  for (double& s : w.samples) s *= 0.5 / peak;
  return w;
}

std::string Condition::tag() const {
  if (clean) return "clean";
  return std::string(noise_name(noise)) + "/" + format_snr(snr_db) + "/" +
         std::string(enhancer_name(enhancer));
}

std::vector<Condition> condition_grid(const CorpusConfig& cfg) {
  std::vector<Condition> grid;
  for (NoiseType n : cfg.noise_types) {
    for (double s : cfg.snr_db_grid) {
      for (Enhancer e : cfg.enhancers) grid.push_back({false, n, s, e});
    }
  }
  if (cfg.include_clean) grid.push_back({true, NoiseType::kWhite, 0.0, Enhancer::kNone});
  return grid;
}

std::vector<double> make_noise(NoiseType type, std::size_t n, std::uint64_t seed) {
  Random rng(seed);
  std::vector<double> out(n);
  switch (type) {
    case NoiseType::kWhite:
      for (double& v : out) v = rng.gaussian();
      break;
    case NoiseType::kPink: {
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (double& v : out) {
        const double w = rng.gaussian();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
      }
      break;
    }
    case NoiseType::kModulatedTonal: {
      std::array<double, 3> freq{}, phase{};
      for (std::size_t k = 0; k < 3; ++k) {
        freq[k] = rng.uniform(300.0, 3000.0);
        phase[k] = rng.uniform(0.0, 2.0 * kPi);
      }
      const double mod_rate = rng.uniform(0.5, 4.0);
      const double mod_phase = rng.uniform(0.0, 2.0 * kPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / dsp::kSampleRate;
        double v = 0.0;
        for (std::size_t k = 0; k < 3; ++k) v += std::sin(2.0 * kPi * freq[k] * t + phase[k]);
        v *= 1.0 + 0.8 * std::sin(2.0 * kPi * mod_rate * t + mod_phase);
        out[i] = v + 0.05 * rng.gaussian();
      }
      break;
    }
  }
  return out;
}

std::vector<double> apply_enhancer(Enhancer e, std::span<const double> noisy, int fs) {
  switch (e) {
    case Enhancer::kNone:
      return {noisy.begin(), noisy.end()};
    case Enhancer::kSpectralSubtraction:
      return spectral_gain(noisy, fs, [](double p, double n) {
        if (p <= 0.0) return 0.0;
        const double target = std::max(p - 1.5 * n, 0.01 * p);
        return std::sqrt(target / p);
      });
    case Enhancer::kWienerGain:
      return spectral_gain(noisy, fs, [](double p, double n) {
        const double s = std::max(p - n, 0.0);
        return s + n > 0.0 ? s / (s + n) : 0.0;
      });
    case Enhancer::kHardClip: {
      std::vector<double> out(noisy.begin(), noisy.end());
      for (double& v : out) v = std::clamp(v, -0.3, 0.3);
      return out;
    }
    case Enhancer::kLowpass: {
      // 4th-order Butterworth as two cascaded biquads.
      const auto stage1 = filter(lowpass_biquad(3000.0, 0.54119610, fs), noisy);
      return filter(lowpass_biquad(3000.0, 1.30656296, fs), stage1);
    }
  }
  return {noisy.begin(), noisy.end()};
}

dsp::Waveform degrade(const dsp::Waveform& clean, NoiseType noise, double snr_db,
                      Enhancer enhancer, std::uint64_t noise_seed) {
  clean.validate();
  const double e_clean = energy(clean.samples);
  if (e_clean <= 0.0) throw DegenerateError("degrade: clean signal has zero energy");
  std::vector<double> n = make_noise(noise, clean.size(), noise_seed);
  const double gain = std::sqrt(e_clean / (energy(n) * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> noisy(clean.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = clean.samples[i] + gain * n[i];
  return {apply_enhancer(enhancer, noisy, clean.sample_rate_hz), clean.sample_rate_hz};
}

double residual_segmental_snr(const dsp::Waveform& clean, const dsp::Waveform& degraded) {
  const auto pair = oracle::PairedUtterance::make(clean, degraded);
  std::vector<double> resid(pair.clean.size());
  for (std::size_t i = 0; i < resid.size(); ++i) {
    resid[i] = pair.degraded.samples[i] - pair.clean.samples[i];
  }
  const Tensor cf = dsp::frame_signal(std::span<const double>(pair.clean.samples), 512, 256);
  const Tensor rf = dsp::frame_signal(std::span<const double>(resid), 512, 256);
  std::vector<double> ce(cf.rows()), re(cf.rows());
  for (std::size_t t = 0; t < cf.rows(); ++t) {
    ce[t] = cf.matrix().row(static_cast<Eigen::Index>(t)).squaredNorm();
    re[t] = rf.matrix().row(static_cast<Eigen::Index>(t)).squaredNorm();
  }
  const double max_e = *std::max_element(ce.begin(), ce.end());
  if (max_e <= 0.0) throw DegenerateError("degenerate reference: clean signal has zero energy");
  double acc = 0.0;
  std::size_t active = 0;
  for (std::size_t t = 0; t < ce.size(); ++t) {
    if (ce[t] <= 0.0 || ce[t] < max_e * 1e-4) continue;
    const double snr = re[t] > 0.0 ? 10.0 * std::log10(ce[t] / re[t]) : 20.0;
    acc += std::clamp(snr, -5.0, 20.0);
    ++active;
  }
  return acc / static_cast<double>(active);
}

std::array<double, 3> assign_proxy_truth(const dsp::Waveform& clean,
                                         const dsp::Waveform& degraded) {
  const auto pair = oracle::PairedUtterance::make(clean, degraded);
  const double s = std::clamp(5.0 - 8.0 * oracle::sdi(pair), 1.0, 5.0);
  const double snr = residual_segmental_snr(pair.clean, pair.degraded);
  const double nm = std::clamp(1.0 + 4.0 * (snr + 5.0) / 25.0, 1.0, 5.0);
  const double g = std::clamp(0.5 * s + 0.5 * nm, 1.0, 5.0);
  return {s, nm, g};
}

CorpusPaths build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto grid = condition_grid(cfg);
  std::vector<fs::path> written;
  try {
    CorpusPaths paths{out_dir / "train.jsonl", out_dir / "test.jsonl"};
    for (Split split : {Split::kTrain, Split::kTest}) {
      const bool train = split == Split::kTrain;
      const std::size_t count = train ? cfg.num_train : cfg.num_test;
      const std::string prefix = train ? "train" : "test";
      const fs::path wav_dir = out_dir / "wav" / prefix;
      fs::create_directories(wav_dir);
      std::vector<ManifestEntry> entries;
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = utterance_seed(cfg.seed, split, i);
        const Condition& c = grid[i % grid.size()];
        dsp::Waveform clean = synth_clean(cfg.duration_s, seed);
        dsp::Waveform degraded =
            c.clean ? clean : degrade(clean, c.noise, c.snr_db, c.enhancer, splitmix64(seed));
        clean.samples = quantize16(clean.samples);
        degraded.samples = quantize16(degraded.samples);

        char id[64];
        std::snprintf(id, sizeof(id), "%s_%04zu", prefix.c_str(), i);
        const std::string rel_clean = "wav/" + prefix + "/" + id + "_clean.wav";
        const std::string rel_deg = "wav/" + prefix + "/" + id + ".wav";
        io::write_wav(out_dir / rel_clean, clean);
        written.push_back(out_dir / rel_clean);
        io::write_wav(out_dir / rel_deg, degraded);
        written.push_back(out_dir / rel_deg);

        ManifestEntry e;
        e.id = id;
        e.degraded_path = rel_deg;
        e.clean_path = rel_clean;
        e.labels = assign_proxy_truth(clean, degraded);
        e.condition = c.tag();
        entries.push_back(std::move(e));
      }
      const fs::path manifest = train ? paths.train_manifest : paths.test_manifest;
      write_manifest(manifest, entries);
      written.push_back(manifest);
    }
    return paths;
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

}  // namespace mtq::corpus
