#include "mtq/audio_io.hpp"
#include "mtq/corpus.hpp"
#include "mtq/errors.hpp"
#include "mtq/manifest.hpp"
#include "mtq/oracle.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <set>

using namespace mtq;
using namespace mtq::testing;
using corpus::Enhancer;
using corpus::NoiseType;

namespace {

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// Whole-signal DFT energy between lo and hi Hz, zero-padded to a power of two.
double band_energy(const dsp::Waveform& w, double lo, double hi) {
  std::size_t n = 1;
  while (n < w.size()) n *= 2;
  std::vector<double> x(w.samples);
  x.resize(n, 0.0);
  const auto spec = dsp::rfft(x);
  const double hz = double(w.sample_rate_hz) / double(n);
  double e = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = double(k) * hz;
    if (f >= lo && f < hi) e += std::norm(spec[k]);
  }
  return e;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

corpus::CorpusConfig small_config() {
  corpus::CorpusConfig c;
  c.num_train = 10;
  c.num_test = 4;
  c.duration_s = 1.0;
  return c;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("clean synthesis is deterministic and peak-normalised") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto a = corpus::synth_clean(2.0, seed);
    const auto b = corpus::synth_clean(2.0, seed);
    CHECK(a.samples == b.samples);
    CHECK(a.size() == 32000);
    double peak = 0.0;
    for (double v : a.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(0.5).epsilon(1e-9));
  }
  CHECK(corpus::synth_clean(2.0, 1).samples != corpus::synth_clean(2.0, 2).samples);
}

TEST_CASE("property: speech-band energy exceeds energy above 5 kHz") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = corpus::synth_clean(2.0, 100 + seed);
    CHECK(band_energy(w, 100.0, 2000.0) > band_energy(w, 5000.0, 8000.0));
  }
}

TEST_CASE("splits draw from disjoint seeds") {
  std::set<std::uint64_t> train, test;
  for (std::size_t i = 0; i < 500; ++i) {
    train.insert(corpus::utterance_seed(7, corpus::Split::kTrain, i));
    test.insert(corpus::utterance_seed(7, corpus::Split::kTest, i));
  }
  CHECK(train.size() == 500);
  for (auto s : test) REQUIRE(train.count(s) == 0);
}

TEST_CASE("mixing SNR is exact before enhancement") {
  const auto clean = corpus::synth_clean(2.0, 3);
  for (NoiseType n : {NoiseType::kWhite, NoiseType::kPink, NoiseType::kModulatedTonal}) {
    for (double snr : {-5.0, 0.0, 5.0, 10.0, 15.0}) {
      const auto y = corpus::degrade(clean, n, snr, Enhancer::kNone, 11);
      std::vector<double> noise(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) noise[i] = y.samples[i] - clean.samples[i];
      const double measured = 10.0 * std::log10(energy(clean.samples) / energy(noise));
      INFO(corpus::noise_name(n) << " " << snr);
      CHECK(std::abs(measured - snr) <= 0.01);
    }
  }
}

TEST_CASE("+60 dB white noise keeps STOI above 0.95") {
  const auto clean = corpus::synth_clean(3.0, 4);
  const auto y = corpus::degrade(clean, NoiseType::kWhite, 60.0, Enhancer::kNone, 2);
  CHECK(oracle::stoi(oracle::PairedUtterance::make(clean, y)) > 0.95);
}

TEST_CASE("hard clip of clean speech distorts it") {
  const auto clean = corpus::synth_clean(2.0, 5);
  const dsp::Waveform clipped{corpus::apply_enhancer(Enhancer::kHardClip, clean.samples, 16000),
                              16000};
  for (double v : clipped.samples) REQUIRE(std::abs(v) <= 0.3);
  CHECK(oracle::sdi(oracle::PairedUtterance::make(clean, clipped)) > 0.0);
}

TEST_CASE("enhancers preserve length and reduce noise energy") {
  const auto clean = corpus::synth_clean(2.0, 6);
  const auto noisy = corpus::degrade(clean, NoiseType::kWhite, 0.0, Enhancer::kNone, 3);
  for (Enhancer e : {Enhancer::kSpectralSubtraction, Enhancer::kWienerGain, Enhancer::kLowpass}) {
    const auto out = corpus::apply_enhancer(e, noisy.samples, 16000);
    REQUIRE(out.size() == noisy.size());
    INFO(corpus::enhancer_name(e));
    CHECK(energy(out) < energy(noisy.samples));
    for (double v : out) REQUIRE(std::isfinite(v));
  }
  const auto none = corpus::apply_enhancer(Enhancer::kNone, noisy.samples, 16000);
  CHECK(none == noisy.samples);
}

TEST_CASE("lowpass attenuates above the cutoff") {
  const auto hi = sine(16000, 6000.0, 0.5);
  const auto lo = sine(16000, 500.0, 0.5);
  const auto hi_out = corpus::apply_enhancer(Enhancer::kLowpass, hi, 16000);
  const auto lo_out = corpus::apply_enhancer(Enhancer::kLowpass, lo, 16000);
  // Fourth order at 3 kHz: about -28 dB at 6 kHz, passband near unity.
  CHECK(10.0 * std::log10(energy(hi_out) / energy(hi)) < -20.0);
  CHECK(10.0 * std::log10(energy(lo_out) / energy(lo)) > -0.5);
}

TEST_CASE("degrade rejects silent input") {
  const dsp::Waveform z{std::vector<double>(16000, 0.0), 16000};
  CHECK_THROWS_AS(corpus::degrade(z, NoiseType::kWhite, 5.0, Enhancer::kNone, 1), DegenerateError);
  CHECK_THROWS_AS(corpus::assign_proxy_truth(z, z), DegenerateError);
}

TEST_CASE("proxy truth: identity limits and the SDI = 0.5 endpoint") {
  const auto clean = corpus::synth_clean(2.0, 7);
  const auto same = corpus::assign_proxy_truth(clean, clean);
  CHECK(same[0] == 5.0);
  CHECK(same[1] == 5.0);
  CHECK(same[2] == 5.0);
  CHECK(corpus::residual_segmental_snr(clean, clean) == 20.0);

  // SDI(x, c x) = (c - 1)^2 = 0.5 gives S = 5 - 8 * 0.5 = 1.
  dsp::Waveform y = clean;
  for (double& v : y.samples) v *= 1.0 - std::sqrt(0.5);
  const auto t = corpus::assign_proxy_truth(clean, y);
  CHECK(t[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t[2] == doctest::Approx(0.5 * t[0] + 0.5 * t[1]).epsilon(1e-12));
}

TEST_CASE("proxy truth formulas against the oracles") {
  const auto clean = corpus::synth_clean(2.0, 8);
  const auto y = corpus::degrade(clean, NoiseType::kPink, 5.0, Enhancer::kWienerGain, 4);
  const auto t = corpus::assign_proxy_truth(clean, y);
  const double sdi = oracle::sdi(oracle::PairedUtterance::make(clean, y));
  const double snr = corpus::residual_segmental_snr(clean, y);
  CHECK(t[0] == doctest::Approx(std::clamp(5.0 - 8.0 * sdi, 1.0, 5.0)));
  CHECK(t[1] == doctest::Approx(std::clamp(1.0 + 4.0 * (snr + 5.0) / 25.0, 1.0, 5.0)));
  CHECK((snr >= -5.0 && snr <= 20.0));
}

TEST_CASE("property: N-proxy is non-decreasing in mixing SNR") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto clean = corpus::synth_clean(2.0, 20 + seed);
    for (NoiseType n : {NoiseType::kWhite, NoiseType::kPink, NoiseType::kModulatedTonal}) {
      double prev = 0.0;
      for (double snr : {-5.0, 0.0, 5.0, 10.0, 15.0}) {
        const auto y = corpus::degrade(clean, n, snr, Enhancer::kNone, 9 + seed);
        const double nproxy = corpus::assign_proxy_truth(clean, y)[1];
        INFO(corpus::noise_name(n) << " " << snr);
        CHECK(nproxy >= prev);
        prev = nproxy;
      }
    }
  }
}

TEST_CASE("condition grid and tags") {
  const corpus::CorpusConfig c;
  const auto grid = corpus::condition_grid(c);
  CHECK(grid.size() == 3 * 5 * 5 + 1);
  std::set<std::string> tags;
  for (const auto& g : grid) tags.insert(g.tag());
  CHECK(tags.size() == grid.size());
  CHECK(tags.count("clean") == 1);
  CHECK(tags.count("white/-5dB/none") == 1);
  for (auto n : c.noise_types) CHECK(corpus::noise_from_name(corpus::noise_name(n)) == n);
  for (auto e : c.enhancers) CHECK(corpus::enhancer_from_name(corpus::enhancer_name(e)) == e);
  CHECK_THROWS_AS(corpus::noise_from_name("brown"), ConfigError);
}

TEST_CASE("corpus config validation") {
  auto c = small_config();
  c.duration_s = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.enhancers.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.snr_db_grid = {NAN};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("built corpus: counts, ids, ranges, disjointness, determinism") {
  TempDir a("corpus_a"), b("corpus_b");
  const auto cfg = small_config();
  const auto pa = corpus::build_corpus(cfg, a.path());
  const auto pb = corpus::build_corpus(cfg, b.path());
  CHECK(slurp(pa.train_manifest) == slurp(pb.train_manifest));
  CHECK(slurp(pa.test_manifest) == slurp(pb.test_manifest));

  const auto train = read_manifest(pa.train_manifest);
  const auto test = read_manifest(pa.test_manifest);
  CHECK(train.entries.size() == 10);
  CHECK(test.entries.size() == 4);
  std::set<std::string> ids;
  std::set<std::vector<double>> train_clean;
  for (const auto& e : train.entries) {
    ids.insert(e.id);
    REQUIRE(e.labels);
    for (double v : *e.labels) REQUIRE((v >= 1.0 && v <= 5.0));
    CHECK_FALSE(e.pseudo);
    // Labels are a pure function of the stored audio.
    const auto clean = io::read_wav(train.resolve(*e.clean_path));
    const auto degraded = io::read_wav(train.degraded(e));
    CHECK(corpus::assign_proxy_truth(clean, degraded) == *e.labels);
    train_clean.insert(clean.samples);
  }
  CHECK(ids.size() == 10);
  for (const auto& e : test.entries) {
    CHECK(train_clean.count(io::read_wav(test.resolve(*e.clean_path)).samples) == 0);
  }
  CHECK(train.entries[0].condition == corpus::condition_grid(cfg)[0].tag());
}

TEST_CASE("build_corpus leaves nothing behind on failure") {
  TempDir dir("corpus_fail");
  auto cfg = small_config();
  cfg.duration_s = 0.1;
  CHECK_THROWS_AS(corpus::build_corpus(cfg, dir / "out"), ConfigError);
  CHECK_FALSE(std::filesystem::exists(dir / "out" / "train.jsonl"));
}

}  // TEST_SUITE
