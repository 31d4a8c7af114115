#include "mtq/loss.hpp"

#include "mtq/errors.hpp"

#include <cmath>

namespace mtq::train {

std::string_view loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kHuber: return "huber";
    case LossKind::kMse: return "mse";
    case LossKind::kMae: return "mae";
  }
  return "huber";
}

LossKind loss_kind_from_name(std::string_view name) {
  if (name == "huber") return LossKind::kHuber;
  if (name == "mse") return LossKind::kMse;
  if (name == "mae") return LossKind::kMae;
  throw ConfigError("unknown loss kind: " + std::string(name));
}

double huber(double error, double delta) {
  const double a = std::abs(error);
  return a <= delta ? 0.5 * error * error : delta * (a - 0.5 * delta);
}

double huber_derivative(double error, double delta) {
  if (std::abs(error) <= delta) return error;
  return error > 0.0 ? delta : -delta;
}

double pointwise_loss(double error, LossKind kind, double delta) {
  switch (kind) {
    case LossKind::kHuber: return huber(error, delta);
    case LossKind::kMse: return 0.5 * error * error;
    case LossKind::kMae: return std::abs(error);
  }
  return 0.0;
}

double pointwise_loss_derivative(double error, LossKind kind, double delta) {
  switch (kind) {
    case LossKind::kHuber: return huber_derivative(error, delta);
    case LossKind::kMse: return error;
    case LossKind::kMae: return error > 0.0 ? 1.0 : (error < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

void LossConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError("loss config: delta must be positive");
  for (double w : frame_weight) {
    if (!(w >= 0.0)) throw ConfigError("loss config: frame weights must be >= 0");
  }
  if (!superv_enabled && !semi_enabled) {
    throw ConfigError("loss config: both supervised and semi-supervised terms disabled");
  }
}

std::optional<double> LabelSet::target(Metric m) const {
  const auto& block = is_primary(m) ? primary : pseudo;
  if (!block) return std::nullopt;
  return (*block)[metric_index(m) % 3];
}

double metric_loss(double target, std::span<const double> frame_scores, double utterance_score,
                   const LossConfig& cfg, Metric m) {
  if (frame_scores.empty()) throw ShapeError("metric_loss: no frame scores");
  const double utt = pointwise_loss(target - utterance_score, cfg.kind, cfg.delta);
  double frames = 0.0;
  for (double s : frame_scores) frames += pointwise_loss(target - s, cfg.kind, cfg.delta);
  return utt + cfg.frame_weight[metric_index(m)] * frames / static_cast<double>(frame_scores.size());
}

nn::Var mean_pointwise_loss(nn::Graph& g, nn::Var a, double target, LossKind kind, double delta) {
  const Tensor& x = g.value(a);
  double total = 0.0;
  for (double v : x.values()) {
    const double e = target - v;
    total += pointwise_loss(e, kind, delta);
    if (g.tracking_branches() && kind != LossKind::kMse) {
      const bool outer = kind == LossKind::kMae || std::abs(e) > delta;
      g.note_branch(outer ? (e > 0.0 ? 1 : 2) : 0);
    }
  }
  const double n = static_cast<double>(x.size());
  return g.record(Tensor::scalar(total / n), {a},
                  [a, target, kind, delta, n](nn::Graph& gr, const Tensor& dy) {
                    const Tensor& xv = gr.value(a);
                    Tensor& dx = gr.grad_buffer(a);
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                      dx[i] -= dy[0] * pointwise_loss_derivative(target - xv[i], kind, delta) / n;
                    }
                  });
}

nn::Var metric_loss(nn::Graph& g, double target, nn::Var frame_scores, nn::Var utterance_score,
                    const LossConfig& cfg, Metric m) {
  const nn::Var utt = mean_pointwise_loss(g, utterance_score, target, cfg.kind, cfg.delta);
  const nn::Var frames = mean_pointwise_loss(g, frame_scores, target, cfg.kind, cfg.delta);
  return nn::add(g, utt, nn::scale(g, frames, cfg.frame_weight[metric_index(m)]));
}

std::array<bool, kNumMetrics> required_heads(const LossConfig& cfg) {
  std::array<bool, kNumMetrics> out{};
  for (Metric m : kAllMetrics) out[metric_index(m)] = cfg.metric_enabled(m);
  return out;
}

LossBreakdown total_objective(std::span<const LabelSet> labels,
                              std::span<const PredictionSet> predictions, const LossConfig& cfg,
                              std::size_t* warnings) {
  if (labels.size() != predictions.size() || labels.empty()) {
    throw ShapeError("total_objective: labels and predictions must be non-empty and aligned");
  }
  LossBreakdown out;
  for (Metric m : kAllMetrics) {
    if (!cfg.metric_enabled(m)) continue;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t u = 0; u < labels.size(); ++u) {
      const auto target = labels[u].target(m);
      if (!target) continue;
      const HeadOutput& h = predictions[u][m];
      acc += metric_loss(*target, h.frame_scores, h.utterance_score, cfg, m);
      ++count;
    }
    if (count == 0) {
      if (warnings != nullptr) ++*warnings;
      continue;
    }
    out.per_metric[metric_index(m)] = acc / static_cast<double>(count);
  }
  out.superv = out[Metric::kSmos] + out[Metric::kNmos] + out[Metric::kGmos];
  out.semi = out[Metric::kPq] + out[Metric::kStoi] + out[Metric::kSdi];
  out.objective = out.superv + out.semi;
  return out;
}

GraphObjective total_objective(nn::Graph& g, std::span<const LabelSet> labels,
                               std::span<const HeadVars> predictions, const LossConfig& cfg,
                               std::size_t* warnings) {
  if (labels.size() != predictions.size() || labels.empty()) {
    throw ShapeError("total_objective: labels and predictions must be non-empty and aligned");
  }
  std::array<nn::Var, kNumMetrics> terms;
  for (Metric m : kAllMetrics) {
    const std::size_t i = metric_index(m);
    if (!cfg.metric_enabled(m)) continue;
    nn::Var acc;
    std::size_t count = 0;
    for (std::size_t u = 0; u < labels.size(); ++u) {
      const auto target = labels[u].target(m);
      if (!target) continue;
      const HeadVars& h = predictions[u];
      if (!h.frame[i].valid()) throw ConfigError("total_objective: head not evaluated");
      const nn::Var l = metric_loss(g, *target, h.frame[i], h.utterance[i], cfg, m);
      acc = acc.valid() ? nn::add(g, acc, l) : l;
      ++count;
    }
    if (count == 0) {
      if (warnings != nullptr) ++*warnings;
      continue;
    }
    terms[i] = nn::scale(g, acc, 1.0 / static_cast<double>(count));
  }

  GraphObjective out;
  auto group_sum = [&](const std::array<Metric, 3>& group) {
    nn::Var acc;
    for (Metric m : group) {
      const nn::Var t = terms[metric_index(m)];
      if (!t.valid()) continue;
      acc = acc.valid() ? nn::add(g, acc, t) : t;
    }
    return acc;
  };
  const nn::Var superv = group_sum(kPrimaryMetrics);
  const nn::Var semi = group_sum(kPseudoMetrics);
  if (superv.valid() && semi.valid()) {
    out.objective = nn::add(g, superv, semi);
  } else if (superv.valid()) {
    out.objective = nn::scale(g, superv, 1.0);
  } else if (semi.valid()) {
    out.objective = nn::scale(g, semi, 1.0);
  } else {
    out.objective = g.input(Tensor::scalar(0.0));
  }

  for (Metric m : kAllMetrics) {
    const nn::Var t = terms[metric_index(m)];
    out.values.per_metric[metric_index(m)] = t.valid() ? g.value(t)[0] : 0.0;
  }
  out.values.superv = superv.valid() ? g.value(superv)[0] : 0.0;
  out.values.semi = semi.valid() ? g.value(semi)[0] : 0.0;
  out.values.objective = g.value(out.objective)[0];
  return out;
}

}  // namespace mtq::train
