#include "mtq/model.hpp"

#include "mtq/audio_io.hpp"
#include "mtq/errors.hpp"
#include "mtq/layers.hpp"

#include <cmath>

namespace mtq {

namespace {

constexpr std::array<std::string_view, kNumMetrics> kMetricNames = {"smos", "nmos", "gmos",
                                                                    "pq",   "stoi", "sdi"};

std::size_t conv_out_bins(std::size_t bins, const MtqNetConfig& c) {
  const std::size_t pad = c.conv_kernel / 2;
  return (bins + 2 * pad - c.conv_kernel) / c.conv_stride_freq + 1;
}

std::size_t stack_out_bins(std::size_t bins, const MtqNetConfig& c) {
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) bins = conv_out_bins(bins, c);
  return bins;
}

std::vector<std::pair<std::string, std::size_t>> streams(const MtqNetConfig& c) {
  std::vector<std::pair<std::string, std::size_t>> out;
  if (c.features.stft) out.emplace_back("stft", c.n_fft / 2 + 1);
  if (c.features.lfb) out.emplace_back("lfb", c.lfb_filters);
  if (c.features.ssl) out.emplace_back("ssl", c.emb_dim);
  return out;
}

std::string head_prefix(Metric m) { return "head_" + std::string(metric_name(m)) + "_"; }

}  // namespace

std::string_view metric_name(Metric m) { return kMetricNames[metric_index(m)]; }

Metric metric_from_name(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) return m;
  }
  throw ConfigError("unknown metric: " + std::string(name));
}

bool is_primary(Metric m) { return metric_index(m) < 3; }

// --- config ---------------------------------------------------------------------

MtqNetConfig MtqNetConfig::tiny() {
  MtqNetConfig c;
  c.conv_channels = {4, 8};
  c.blstm_hidden = 16;
  c.head_fc_width = 16;
  return c;
}

MtqNetConfig MtqNetConfig::desk() {
  MtqNetConfig c;
  c.conv_channels = {4, 8, 8};
  c.blstm_hidden = 32;
  c.head_fc_width = 16;
  return c;
}

void MtqNetConfig::validate() const {
  if (!features.stft && !features.lfb && !features.ssl) {
    throw ConfigError("model config: at least one feature stream must be enabled");
  }
  if (conv_channels.empty()) throw ConfigError("model config: conv_channels is empty");
  for (auto c : conv_channels) {
    if (c < 1) throw ConfigError("model config: conv channel widths must be >= 1");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("model config: conv_kernel must be odd and >= 1");
  }
  if (conv_stride_freq < 1 || blstm_hidden < 1 || head_fc_width < 1) {
    throw ConfigError("model config: widths and strides must be >= 1");
  }
  if (features.ssl && emb_dim < 1) throw ConfigError("model config: ssl enabled with emb_dim 0");
  if (!features.ssl && emb_dim != 0) {
    throw ConfigError("model config: emb_dim must be 0 when ssl is disabled");
  }
  if (features.lfb && (lfb_filters < 1 || lfb_kernel_len % 2 == 0 || lfb_kernel_len > n_fft)) {
    throw ConfigError("model config: invalid filterbank size");
  }
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0 || hop < 1 || hop > n_fft) {
    throw ConfigError("model config: n_fft must be a power of two and 1 <= hop <= n_fft");
  }
  for (const auto& r : ranges) {
    if (!(r.hi > r.lo)) throw ConfigError("model config: empty score range");
  }
}

nlohmann::json MtqNetConfig::to_json() const {
  nlohmann::json ranges_json = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const auto& r = ranges[metric_index(m)];
    ranges_json[std::string(metric_name(m))] = {r.lo, r.hi};
  }
  return {
      {"conv_channels", conv_channels},
      {"conv_kernel", conv_kernel},
      {"conv_stride_freq", conv_stride_freq},
      {"blstm_hidden", blstm_hidden},
      {"head_fc_width", head_fc_width},
      {"features", {{"stft", features.stft}, {"lfb", features.lfb}, {"ssl", features.ssl}}},
      {"emb_dim", emb_dim},
      {"lfb_filters", lfb_filters},
      {"lfb_kernel_len", lfb_kernel_len},
      {"lfb_min_hz", lfb_min_hz},
      {"lfb_max_hz", lfb_max_hz},
      {"n_fft", n_fft},
      {"hop", hop},
      {"ranges", ranges_json},
  };
}

MtqNetConfig MtqNetConfig::from_json(const nlohmann::json& j) {
  MtqNetConfig c;
  try {
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    c.conv_stride_freq = j.at("conv_stride_freq").get<std::size_t>();
    c.blstm_hidden = j.at("blstm_hidden").get<std::size_t>();
    c.head_fc_width = j.at("head_fc_width").get<std::size_t>();
    c.features.stft = j.at("features").at("stft").get<bool>();
    c.features.lfb = j.at("features").at("lfb").get<bool>();
    c.features.ssl = j.at("features").at("ssl").get<bool>();
    c.emb_dim = j.at("emb_dim").get<std::size_t>();
    c.lfb_filters = j.at("lfb_filters").get<std::size_t>();
    c.lfb_kernel_len = j.at("lfb_kernel_len").get<std::size_t>();
    c.lfb_min_hz = j.at("lfb_min_hz").get<double>();
    c.lfb_max_hz = j.at("lfb_max_hz").get<double>();
    c.n_fft = j.at("n_fft").get<std::size_t>();
    c.hop = j.at("hop").get<std::size_t>();
    for (Metric m : kAllMetrics) {
      const auto& r = j.at("ranges").at(std::string(metric_name(m)));
      c.ranges[metric_index(m)] = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- features -------------------------------------------------------------------

FeatureBundle extract_features(const dsp::Waveform& w, const MtqNetConfig& config,
                               const std::optional<std::filesystem::path>& emb_path) {
  FeatureBundle fb;
  fb.power = dsp::stft_power(w, config.n_fft, config.hop).power;
  if (config.features.ssl) {
    if (!emb_path) throw ConfigError("model expects SSL embeddings but no sidecar was given");
    fb.ssl = io::load_embeddings(*emb_path, fb.num_frames(), config.emb_dim);
  }
  return fb;
}

// --- build ----------------------------------------------------------------------

MtqNet MtqNet::build(const MtqNetConfig& config, std::uint64_t seed) {
  config.validate();
  nn::Rng rng(seed);
  nn::ParamStore ps;
  const std::size_t k = config.conv_kernel;

  std::size_t encoder_in = 0;
  for (const auto& [name, bins] : streams(config)) {
    if (name == "lfb") {
      const auto init = dsp::mel_sinc_params(config.lfb_filters, config.lfb_min_hz,
                                             config.lfb_max_hz, config.lfb_kernel_len);
      Tensor low({config.lfb_filters}, init.low_hz);
      Tensor band({config.lfb_filters}, init.band_hz);
      for (std::size_t i = 0; i < low.size(); ++i) {
        dsp::clamp_sinc_band(low[i], band[i], dsp::kSampleRate);
      }
      ps.add("lfb_low_hz", std::move(low));
      ps.add("lfb_band_hz", std::move(band));
    }
    std::size_t in_ch = 1;
    for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
      const std::size_t out_ch = config.conv_channels[i];
      const double limit = nn::glorot_limit(in_ch * k * k, out_ch * k * k);
      const std::string p = name + "_conv" + std::to_string(i);
      ps.add(p + "_w", nn::uniform_tensor({out_ch, in_ch, k, k}, limit, rng));
      ps.add(p + "_b", Tensor({out_ch}));
      in_ch = out_ch;
    }
    encoder_in += in_ch * stack_out_bins(bins, config);
  }

  const std::size_t h = config.blstm_hidden;
  const double lstm_limit = 1.0 / std::sqrt(static_cast<double>(h));
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("blstm_") + dir + "_";
    ps.add(p + "input", nn::uniform_tensor({encoder_in, 4 * h}, lstm_limit, rng));
    ps.add(p + "recurrent", nn::uniform_tensor({h, 4 * h}, lstm_limit, rng));
    Tensor bias({4 * h});
    for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;
    ps.add(p + "bias", std::move(bias));
  }

  const std::size_t d = 2 * h;
  const std::size_t fc = config.head_fc_width;
  for (Metric m : kAllMetrics) {
    const std::string p = head_prefix(m);
    for (const char* w : {"attn_q", "attn_k", "attn_v"}) {
      ps.add(p + w, nn::uniform_tensor({d, d}, nn::glorot_limit(d, d), rng));
    }
    ps.add(p + "fc_w", nn::uniform_tensor({d, fc}, nn::glorot_limit(d, fc), rng));
    ps.add(p + "fc_b", Tensor({fc}));
    ps.add(p + "out_w", nn::uniform_tensor({fc, 1}, nn::glorot_limit(fc, 1), rng));
    ps.add(p + "out_b", Tensor({1}));
  }
  return MtqNet(config, std::move(ps));
}

// --- forward --------------------------------------------------------------------

nn::Var MtqNet::conv_stack(nn::Graph& g, nn::Var image, const std::string& prefix) const {
  const std::size_t pad = config_.conv_kernel / 2;
  const nn::Conv2dSpec spec{1, config_.conv_stride_freq, pad, pad};
  nn::Var x = image;
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::string p = prefix + "_conv" + std::to_string(i);
    x = nn::relu(g, nn::conv2d(g, x, g.param(params_.get(p + "_w")),
                               g.param(params_.get(p + "_b")), spec));
  }
  return nn::channels_to_frames(g, x);
}

nn::Var MtqNet::encode(nn::Graph& g, const FeatureBundle& features) const {
  const std::size_t frames = features.num_frames();
  const std::size_t bins = config_.n_fft / 2 + 1;
  if (features.power.rank() != 2 || features.power.cols() != bins || frames == 0) {
    throw ShapeError("forward: power features " + shape_string(features.power.shape()) +
                     " do not match n_fft " + std::to_string(config_.n_fft));
  }
  std::vector<nn::Var> parts;
  const nn::Var power = g.input(features.power);
  if (config_.features.stft) {
    const nn::Var compressed =
        nn::log1p_scaled(g, power, kPowerCompressInScale, kPowerCompressOutScale);
    parts.push_back(conv_stack(g, nn::as_single_channel(g, compressed), "stft"));
  }
  if (config_.features.lfb) {
    const nn::Var response = nn::sinc_filter_response(
        g, g.param(params_.get("lfb_low_hz")), g.param(params_.get("lfb_band_hz")),
        dsp::kSampleRate, config_.lfb_kernel_len, config_.n_fft);
    const nn::Var energies = nn::matmul(g, power, nn::transpose(g, response));
    const nn::Var compressed =
        nn::log1p_scaled(g, energies, kPowerCompressInScale, kPowerCompressOutScale);
    parts.push_back(conv_stack(g, nn::as_single_channel(g, compressed), "lfb"));
  }
  if (config_.features.ssl) {
    if (!features.ssl) throw ConfigError("forward: model expects SSL embeddings");
    const Tensor& emb = *features.ssl;
    if (emb.rank() != 2 || emb.rows() != frames || emb.cols() != config_.emb_dim) {
      throw ShapeError("forward: embeddings " + shape_string(emb.shape()) + " misaligned with " +
                       std::to_string(frames) + " frames x emb_dim " +
                       std::to_string(config_.emb_dim));
    }
    parts.push_back(conv_stack(g, nn::as_single_channel(g, g.input(emb)), "ssl"));
  }
  const nn::Var fused = parts.size() == 1 ? parts.front() : nn::concat_cols(g, parts);

  auto lstm = [&](const char* dir) {
    const std::string p = std::string("blstm_") + dir + "_";
    return nn::LstmWeights{g.param(params_.get(p + "input")), g.param(params_.get(p + "recurrent")),
                           g.param(params_.get(p + "bias"))};
  };
  return nn::bilstm(g, fused, lstm("fwd"), lstm("bwd"));
}

nn::Var MtqNet::head(nn::Graph& g, nn::Var encoded, Metric m) const {
  const std::string p = head_prefix(m);
  const nn::Var attended =
      nn::self_attention(g, encoded, g.param(params_.get(p + "attn_q")),
                         g.param(params_.get(p + "attn_k")), g.param(params_.get(p + "attn_v")));
  const nn::Var hidden = nn::relu(
      g, nn::dense(g, attended, g.param(params_.get(p + "fc_w")), g.param(params_.get(p + "fc_b"))));
  const nn::Var raw =
      nn::dense(g, hidden, g.param(params_.get(p + "out_w")), g.param(params_.get(p + "out_b")));
  const ScoreRange r = config_.ranges[metric_index(m)];
  return nn::squash(g, raw, r.lo, r.hi);
}

HeadVars MtqNet::forward(nn::Graph& g, const FeatureBundle& features,
                         const std::array<bool, kNumMetrics>& heads) const {
  const nn::Var encoded = encode(g, features);
  HeadVars out;
  for (Metric m : kAllMetrics) {
    const std::size_t i = metric_index(m);
    if (!heads[i]) continue;
    out.frame[i] = head(g, encoded, m);
    out.utterance[i] = nn::mean(g, out.frame[i]);
  }
  return out;
}

HeadVars MtqNet::forward(nn::Graph& g, const FeatureBundle& features) const {
  return forward(g, features, {true, true, true, true, true, true});
}

PredictionSet MtqNet::forward(const FeatureBundle& features) const {
  nn::Graph g;
  g.set_grad_enabled(false);
  const HeadVars vars = forward(g, features);
  PredictionSet out;
  for (Metric m : kAllMetrics) {
    const std::size_t i = metric_index(m);
    out.heads[i].frame_scores = g.value(vars.frame[i]).values();
    out.heads[i].utterance_score = g.value(vars.utterance[i])[0];
  }
  return out;
}

PrimaryScores MtqNet::predict(const FeatureBundle& features) const {
  nn::Graph g;
  g.set_grad_enabled(false);
  const HeadVars vars = forward(g, features, {true, true, true, false, false, false});
  return {g.value(vars.utterance[0])[0], g.value(vars.utterance[1])[0],
          g.value(vars.utterance[2])[0]};
}

void MtqNet::apply_constraints() {
  if (!config_.features.lfb) return;
  auto& low = params_.get("lfb_low_hz").value;
  auto& band = params_.get("lfb_band_hz").value;
  for (std::size_t i = 0; i < low.size(); ++i) {
    dsp::clamp_sinc_band(low[i], band[i], dsp::kSampleRate);
  }
}

PrimaryScores predict(const MtqNet& model, const dsp::Waveform& w,
                      const std::optional<std::filesystem::path>& emb_path) {
  return model.predict(extract_features(w, model.config(), emb_path));
}

}  // namespace mtq
