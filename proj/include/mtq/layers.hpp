#pragma once

#include "mtq/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace mtq::nn {

struct Conv2dSpec {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

// Cross-correlation of x [C_in x H x W] with weights [C_out x C_in x kh x kw]
// plus bias [C_out]; output [C_out x H' x W'].
Var conv2d(Graph& g, Var x, Var weights, Var bias, const Conv2dSpec& spec);

// [C x F x B] -> [F x C*B]: per-frame flattening of a channel stack.
Var channels_to_frames(Graph& g, Var x);
// [F x B] -> [1 x F x B]
Var as_single_channel(Graph& g, Var x);

struct LstmWeights {
  Var input;      // [D x 4H], gate order i, f, g, o
  Var recurrent;  // [H x 4H]
  Var bias;       // [4H]
};

// Bidirectional LSTM over x [T x D]; output [T x 2H] with forward states in
// the first H columns. Initial states are zero.
Var bilstm(Graph& g, Var x, const LstmWeights& fwd, const LstmWeights& bwd);

// softmax(Q K^T / sqrt(D)) V with Q = x Wq, K = x Wk, V = x Wv.
Var self_attention(Graph& g, Var x, Var wq, Var wk, Var wv);

// x W + b
Var dense(Graph& g, Var x, Var w, Var b);

// Squared DFT magnitude [N x (n_fft/2 + 1)] of the sinc band-pass kernels
// parameterized by low [N] and band [N] cutoffs in Hz.
Var sinc_filter_response(Graph& g, Var low_hz, Var band_hz, int sample_rate_hz,
                         std::size_t kernel_len, std::size_t n_fft);

// --- initialization -----------------------------------------------------------

using Rng = std::mt19937_64;

// Uniform in [-limit, limit]; independent of the standard library's
// distribution implementations so values are stable across toolchains.
double uniform(Rng& rng, double limit);
Tensor uniform_tensor(Shape shape, double limit, Rng& rng);
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

}  // namespace mtq::nn
