#include "mtq/layers.hpp"

#include "mtq/dsp.hpp"
#include "mtq/errors.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace mtq::nn {

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// --- conv2d -------------------------------------------------------------------

Var conv2d(Graph& g, Var x, Var weights, Var bias, const Conv2dSpec& spec) {
  const Tensor& in = g.value(x);
  const Tensor& w = g.value(weights);
  if (in.rank() != 3 || w.rank() != 4 || w.dim(1) != in.dim(0) ||
      g.value(bias).size() != w.dim(0)) {
    throw ShapeError("conv2d: input " + shape_string(in.shape()) + " incompatible with weights " +
                     shape_string(w.shape()) + " and bias " + shape_string(g.value(bias).shape()));
  }
  const std::size_t ci = in.dim(0), h = in.dim(1), wd = in.dim(2);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (h + 2 * spec.pad_h < kh || wd + 2 * spec.pad_w < kw || spec.stride_h == 0 ||
      spec.stride_w == 0) {
    throw ShapeError("conv2d: kernel " + shape_string(w.shape()) + " does not fit input " +
                     shape_string(in.shape()));
  }
  const std::size_t ho = conv_out(h, kh, spec.stride_h, spec.pad_h);
  const std::size_t wo = conv_out(wd, kw, spec.stride_w, spec.pad_w);
  const std::size_t k = ci * kh * kw;

  auto cols = std::make_shared<RowMatrix>(RowMatrix::Zero(static_cast<Eigen::Index>(k),
                                                          static_cast<Eigen::Index>(ho * wo)));
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const auto r = static_cast<Eigen::Index>((c * kh + i) * kw + j);
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * spec.stride_h + i) - static_cast<long>(spec.pad_h);
          if (ih < 0 || ih >= static_cast<long>(h)) continue;
          const double* row = in.data() + (c * h + static_cast<std::size_t>(ih)) * wd;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw =
                static_cast<long>(ow * spec.stride_w + j) - static_cast<long>(spec.pad_w);
            if (iw < 0 || iw >= static_cast<long>(wd)) continue;
            (*cols)(r, static_cast<Eigen::Index>(oh * wo + ow)) = row[iw];
          }
        }
      }
    }
  }

  Tensor out({co, ho, wo});
  MatrixMap om(out.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ho * wo));
  ConstMatrixMap wm(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
  om.noalias() = wm * (*cols);
  om.colwise() += g.value(bias).vector();

  return g.record(std::move(out), {x, weights, bias},
                  [=](Graph& gr, const Tensor& dy) {
                    ConstMatrixMap dm(dy.data(), static_cast<Eigen::Index>(co),
                                      static_cast<Eigen::Index>(ho * wo));
                    if (gr.requires_grad(weights)) {
                      MatrixMap dw(gr.grad_buffer(weights).data(), static_cast<Eigen::Index>(co),
                                   static_cast<Eigen::Index>(k));
                      dw.noalias() += dm * cols->transpose();
                    }
                    if (gr.requires_grad(bias)) {
                      gr.grad_buffer(bias).vector() += dm.rowwise().sum();
                    }
                    if (gr.requires_grad(x)) {
                      ConstMatrixMap wmat(gr.value(weights).data(), static_cast<Eigen::Index>(co),
                                          static_cast<Eigen::Index>(k));
                      const RowMatrix dcols = wmat.transpose() * dm;
                      Tensor& dx = gr.grad_buffer(x);
                      for (std::size_t c = 0; c < ci; ++c) {
                        for (std::size_t i = 0; i < kh; ++i) {
                          for (std::size_t j = 0; j < kw; ++j) {
                            const auto r = static_cast<Eigen::Index>((c * kh + i) * kw + j);
                            for (std::size_t oh = 0; oh < ho; ++oh) {
                              const long ih = static_cast<long>(oh * spec.stride_h + i) -
                                              static_cast<long>(spec.pad_h);
                              if (ih < 0 || ih >= static_cast<long>(h)) continue;
                              double* row = dx.data() + (c * h + static_cast<std::size_t>(ih)) * wd;
                              for (std::size_t ow = 0; ow < wo; ++ow) {
                                const long iw = static_cast<long>(ow * spec.stride_w + j) -
                                                static_cast<long>(spec.pad_w);
                                if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                                row[iw] += dcols(r, static_cast<Eigen::Index>(oh * wo + ow));
                              }
                            }
                          }
                        }
                      }
                    }
                  });
}

Var channels_to_frames(Graph& g, Var x) {
  const Tensor& in = g.value(x);
  if (in.rank() != 3) throw ShapeError("channels_to_frames: expected [C x F x B], got " +
                                       shape_string(in.shape()));
  const std::size_t c = in.dim(0), f = in.dim(1), b = in.dim(2);
  Tensor out({f, c * b});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < f; ++t) {
      std::copy_n(in.data() + (ch * f + t) * b, b, out.data() + t * c * b + ch * b);
    }
  }
  return g.record(std::move(out), {x}, [x, c, f, b](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_buffer(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t t = 0; t < f; ++t) {
        for (std::size_t i = 0; i < b; ++i) dx[(ch * f + t) * b + i] += dy[t * c * b + ch * b + i];
      }
    }
  });
}

Var as_single_channel(Graph& g, Var x) {
  const Tensor& in = g.value(x);
  Tensor out = in.reshaped({1, in.rows(), in.cols()});
  return g.record(std::move(out), {x},
                  [x](Graph& gr, const Tensor& dy) { gr.grad_buffer(x).vector() += dy.vector(); });
}

// --- bilstm -------------------------------------------------------------------

namespace {

struct LstmTrace {
  RowMatrix gates;  // [T x 4H] post-activation i, f, g, o in processing order
  RowMatrix cell;   // [T x H]
  RowMatrix cell_tanh;
  RowMatrix hidden;
};

// Runs one direction; step s processes time index order[s].
LstmTrace lstm_forward(const RowMatrix& x_proj, const ConstMatrixMap& u, std::size_t hidden,
                       bool reverse) {
  const auto t_len = x_proj.rows();
  const auto hh = static_cast<Eigen::Index>(hidden);
  LstmTrace tr{RowMatrix(t_len, 4 * hh), RowMatrix(t_len, hh), RowMatrix(t_len, hh),
               RowMatrix(t_len, hh)};
  Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(hh);
  Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(hh);
  Eigen::RowVectorXd z(4 * hh);
  for (Eigen::Index s = 0; s < t_len; ++s) {
    const Eigen::Index t = reverse ? t_len - 1 - s : s;
    z.noalias() = x_proj.row(t) + h_prev * u;
    for (Eigen::Index j = 0; j < hh; ++j) {
      const double ig = sigmoid_scalar(z(j));
      const double fg = sigmoid_scalar(z(hh + j));
      const double gg = std::tanh(z(2 * hh + j));
      const double og = sigmoid_scalar(z(3 * hh + j));
      const double c = fg * c_prev(j) + ig * gg;
      const double tc = std::tanh(c);
      tr.gates(s, j) = ig;
      tr.gates(s, hh + j) = fg;
      tr.gates(s, 2 * hh + j) = gg;
      tr.gates(s, 3 * hh + j) = og;
      tr.cell(s, j) = c;
      tr.cell_tanh(s, j) = tc;
      tr.hidden(s, j) = og * tc;
    }
    h_prev = tr.hidden.row(s);
    c_prev = tr.cell.row(s);
  }
  return tr;
}

// Returns dZ [T x 4H] in time order and accumulates dU.
RowMatrix lstm_backward(const LstmTrace& tr, const ConstMatrixMap& u, const RowMatrix& d_hidden,
                        bool reverse, MatrixMap* du) {
  const auto t_len = tr.hidden.rows();
  const auto hh = tr.hidden.cols();
  RowMatrix dz_time(t_len, 4 * hh);
  Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(hh);
  Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(hh);
  Eigen::RowVectorXd dz(4 * hh);
  for (Eigen::Index s = t_len - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? t_len - 1 - s : s;
    for (Eigen::Index j = 0; j < hh; ++j) {
      const double ig = tr.gates(s, j), fg = tr.gates(s, hh + j);
      const double gg = tr.gates(s, 2 * hh + j), og = tr.gates(s, 3 * hh + j);
      const double tc = tr.cell_tanh(s, j);
      const double c_prev = s > 0 ? tr.cell(s - 1, j) : 0.0;
      const double dh = d_hidden(t, j) + dh_next(j);
      const double dc = dh * og * (1.0 - tc * tc) + dc_next(j);
      dz(j) = dc * gg * ig * (1.0 - ig);
      dz(hh + j) = dc * c_prev * fg * (1.0 - fg);
      dz(2 * hh + j) = dc * ig * (1.0 - gg * gg);
      dz(3 * hh + j) = dh * tc * og * (1.0 - og);
      dc_next(j) = dc * fg;
    }
    dz_time.row(t) = dz;
    dh_next.noalias() = dz * u.transpose();
    if (du != nullptr && s > 0) du->noalias() += tr.hidden.row(s - 1).transpose() * dz;
  }
  return dz_time;
}

}  // namespace

Var bilstm(Graph& g, Var x, const LstmWeights& fwd, const LstmWeights& bwd) {
  const Tensor& in = g.value(x);
  const std::size_t d = in.cols();
  const std::size_t hidden = g.value(fwd.recurrent).rows();
  for (const LstmWeights* lw : {&fwd, &bwd}) {
    const Tensor& wi = g.value(lw->input);
    const Tensor& wr = g.value(lw->recurrent);
    if (wi.rank() != 2 || wi.rows() != d || wi.cols() != 4 * hidden || wr.rows() != hidden ||
        wr.cols() != 4 * hidden || g.value(lw->bias).size() != 4 * hidden) {
      throw ShapeError("bilstm: input " + shape_string(in.shape()) + " incompatible with weights " +
                       shape_string(wi.shape()) + ", " + shape_string(wr.shape()));
    }
  }
  if (in.rank() != 2 || in.rows() == 0) throw ShapeError("bilstm: expected [T x D] input");

  auto run = [&](const LstmWeights& lw, bool reverse) {
    RowMatrix proj = in.matrix() * g.value(lw.input).matrix();
    proj.rowwise() += g.value(lw.bias).vector().transpose();
    return lstm_forward(proj, g.value(lw.recurrent).matrix(), hidden, reverse);
  };
  auto traces = std::make_shared<std::pair<LstmTrace, LstmTrace>>(run(fwd, false), run(bwd, true));

  const std::size_t t_len = in.rows();
  const auto hh = static_cast<Eigen::Index>(hidden);
  Tensor out({t_len, 2 * hidden});
  auto om = out.matrix();
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(t_len); ++s) {
    om.row(s).head(hh) = traces->first.hidden.row(s);
    om.row(static_cast<Eigen::Index>(t_len) - 1 - s).tail(hh) = traces->second.hidden.row(s);
  }

  const std::vector<Var> inputs{x, fwd.input, fwd.recurrent, fwd.bias,
                                bwd.input, bwd.recurrent, bwd.bias};
  return g.record(std::move(out), inputs, [=](Graph& gr, const Tensor& dy) {
    const auto dym = dy.matrix();
    const auto one_dir = [&](const LstmTrace& tr, const LstmWeights& lw, bool reverse,
                             Eigen::Index col) {
      const RowMatrix d_hidden = dym.middleCols(col, hh);
      std::unique_ptr<MatrixMap> du;
      if (gr.requires_grad(lw.recurrent)) {
        du = std::make_unique<MatrixMap>(gr.grad_buffer(lw.recurrent).matrix());
      }
      const RowMatrix dz =
          lstm_backward(tr, gr.value(lw.recurrent).matrix(), d_hidden, reverse, du.get());
      if (gr.requires_grad(lw.input)) {
        gr.grad_buffer(lw.input).matrix().noalias() += gr.value(x).matrix().transpose() * dz;
      }
      if (gr.requires_grad(lw.bias)) {
        gr.grad_buffer(lw.bias).vector() += dz.colwise().sum().transpose();
      }
      if (gr.requires_grad(x)) {
        gr.grad_buffer(x).matrix().noalias() += dz * gr.value(lw.input).matrix().transpose();
      }
    };
    one_dir(traces->first, fwd, false, 0);
    one_dir(traces->second, bwd, true, hh);
  });
}

// --- attention / dense --------------------------------------------------------

Var self_attention(Graph& g, Var x, Var wq, Var wk, Var wv) {
  const std::size_t d = g.value(x).cols();
  for (Var w : {wq, wk, wv}) {
    const Tensor& wt = g.value(w);
    if (wt.rank() != 2 || wt.rows() != d || wt.cols() != d) {
      throw ShapeError("attention: weights " + shape_string(wt.shape()) + " vs input " +
                       shape_string(g.value(x).shape()));
    }
  }
  const Var q = matmul(g, x, wq);
  const Var k = matmul(g, x, wk);
  const Var v = matmul(g, x, wv);
  const Var logits = scale(g, matmul(g, q, transpose(g, k)), 1.0 / std::sqrt(static_cast<double>(d)));
  return matmul(g, softmax_rows(g, logits), v);
}

Var dense(Graph& g, Var x, Var w, Var b) { return add_row_bias(g, matmul(g, x, w), b); }

// --- sinc filterbank response ---------------------------------------------------

namespace {

struct DftTables {
  RowMatrix cos_table;  // [L x bins]
  RowMatrix sin_table;
};

const DftTables& dft_tables(std::size_t kernel_len, std::size_t n_fft) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, DftTables> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(kernel_len, n_fft);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const std::size_t bins = n_fft / 2 + 1;
  DftTables t{RowMatrix(kernel_len, bins), RowMatrix(kernel_len, bins)};
  for (std::size_t n = 0; n < kernel_len; ++n) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((n * k) % n_fft) /
                           static_cast<double>(n_fft);
      t.cos_table(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = std::cos(phase);
      t.sin_table(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = -std::sin(phase);
    }
  }
  return cache.emplace(key, std::move(t)).first->second;
}

}  // namespace

Var sinc_filter_response(Graph& g, Var low_hz, Var band_hz, int sample_rate_hz,
                         std::size_t kernel_len, std::size_t n_fft) {
  const Tensor& low = g.value(low_hz);
  const Tensor& band = g.value(band_hz);
  if (low.size() != band.size() || low.size() == 0) {
    throw ShapeError("sinc response: low " + shape_string(low.shape()) + " vs band " +
                     shape_string(band.shape()));
  }
  if (kernel_len > n_fft) throw ShapeError("sinc response: kernel longer than n_fft");
  const std::size_t nf = low.size();
  dsp::SincBandParams params{low.values(), band.values(), kernel_len};
  const Tensor kernels = dsp::sinc_kernels(params, sample_rate_hz);
  dsp::clamp_sinc_params(params, sample_rate_hz);

  const DftTables& tab = dft_tables(kernel_len, n_fft);
  auto re = std::make_shared<RowMatrix>(kernels.matrix() * tab.cos_table);
  auto im = std::make_shared<RowMatrix>(kernels.matrix() * tab.sin_table);
  Tensor out({nf, n_fft / 2 + 1});
  out.matrix() = re->array().square() + im->array().square();

  std::vector<bool> free(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    free[i] = params.low_hz[i] == low[i] && params.band_hz[i] == band[i];
  }

  return g.record(std::move(out), {low_hz, band_hz},
                  [=, &tab](Graph& gr, const Tensor& dy) {
                    const auto dym = dy.matrix();
                    const RowMatrix d_re = 2.0 * (re->array() * dym.array()).matrix();
                    const RowMatrix d_im = 2.0 * (im->array() * dym.array()).matrix();
                    const RowMatrix d_kernel =
                        d_re * tab.cos_table.transpose() + d_im * tab.sin_table.transpose();
                    const std::vector<double> window =
                        dsp::make_window(dsp::WindowKind::kHamming, kernel_len);
                    const double fs = sample_rate_hz;
                    const double center = 0.5 * static_cast<double>(kernel_len - 1);
                    for (std::size_t i = 0; i < nf; ++i) {
                      if (!free[i]) continue;
                      const double f1 = params.low_hz[i] / fs;
                      const double f2 = (params.low_hz[i] + params.band_hz[i]) / fs;
                      double d_f1 = 0.0, d_f2 = 0.0;
                      for (std::size_t n = 0; n < kernel_len; ++n) {
                        const double t = static_cast<double>(n) - center;
                        const double w = 2.0 * std::numbers::pi * t;
                        const double dk = d_kernel(static_cast<Eigen::Index>(i),
                                                   static_cast<Eigen::Index>(n)) *
                                          window[n];
                        d_f2 += dk * 2.0 * std::cos(w * f2);
                        d_f1 -= dk * 2.0 * std::cos(w * f1);
                      }
                      if (gr.requires_grad(low_hz)) gr.grad_buffer(low_hz)[i] += (d_f1 + d_f2) / fs;
                      if (gr.requires_grad(band_hz)) gr.grad_buffer(band_hz)[i] += d_f2 / fs;
                    }
                  });
}

// --- init ---------------------------------------------------------------------

double uniform(Rng& rng, double limit) {
  // 53 random bits -> [0, 1)
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return limit * (2.0 * u - 1.0);
}

Tensor uniform_tensor(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = uniform(rng, limit);
  return t;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace mtq::nn
