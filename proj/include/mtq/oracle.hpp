#pragma once

#include "mtq/dsp.hpp"

#include <span>
#include <vector>

namespace mtq::oracle {

// Polyphase rational resampler (up/down) with a Kaiser-windowed sinc
// lowpass; output length is ceil(n * up / down).
std::vector<double> resample_poly(std::span<const double> x, int up, int down);

// Clean/degraded pair after validation. Lengths are truncated to the shorter
// signal; a mismatch above 5% of the longer length is rejected.
struct PairedUtterance {
  dsp::Waveform clean;
  dsp::Waveform degraded;

  static PairedUtterance make(dsp::Waveform clean, dsp::Waveform degraded);
};

struct OracleScores {
  double pq = 0.0;    // [1.0, 4.5]
  double stoi = 0.0;  // [0, 1]
  double sdi = 0.0;   // >= 0
};

// Third-octave band matrix [num_bands x (nfft/2+1)] used by STOI.
std::vector<std::vector<double>> third_octave_bands(int fs, int nfft, int num_bands,
                                                    double min_freq);

double stoi(const PairedUtterance& pair);
double sdi(const PairedUtterance& pair);
double pq_proxy(const PairedUtterance& pair);

// Affine-then-clip map from mean segmental SNR (dB) to the [1, 4.5] score.
double pq_map(double snr_mean_db);

OracleScores score_pair(const PairedUtterance& pair);

}  // namespace mtq::oracle
