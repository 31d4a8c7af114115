#pragma once

#include "mtq/autodiff.hpp"
#include "mtq/model.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>

namespace mtq::train {

enum class LossKind { kHuber, kMse, kMae };

std::string_view loss_kind_name(LossKind k);
LossKind loss_kind_from_name(std::string_view name);

// 0.5 e^2 for |e| <= delta, delta (|e| - 0.5 delta) otherwise.
double huber(double error, double delta);
double huber_derivative(double error, double delta);

// Per-element loss for the selected kind (mse: 0.5 e^2, mae: |e|).
double pointwise_loss(double error, LossKind kind, double delta);
double pointwise_loss_derivative(double error, LossKind kind, double delta);

struct LossConfig {
  double delta = 1.0;
  std::array<double, kNumMetrics> frame_weight{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  LossKind kind = LossKind::kHuber;
  bool superv_enabled = true;
  bool semi_enabled = true;

  void validate() const;
  bool metric_enabled(Metric m) const { return is_primary(m) ? superv_enabled : semi_enabled; }
};

struct LabelSet {
  std::optional<std::array<double, 3>> primary;  // smos, nmos, gmos
  std::optional<std::array<double, 3>> pseudo;   // pq, stoi, sdi

  std::optional<double> target(Metric m) const;
};

struct LossBreakdown {
  std::array<double, kNumMetrics> per_metric{};
  double superv = 0.0;
  double semi = 0.0;
  double objective = 0.0;

  double operator[](Metric m) const { return per_metric[metric_index(m)]; }
};

// L_utt + L_fr for one utterance and one metric:
//   rho(S - S_hat) + alpha / F * sum_f rho(S - s_f)
double metric_loss(double target, std::span<const double> frame_scores, double utterance_score,
                   const LossConfig& cfg, Metric m);

// mean_f rho(target - a_f) as a [1] graph node.
nn::Var mean_pointwise_loss(nn::Graph& g, nn::Var a, double target, LossKind kind, double delta);

nn::Var metric_loss(nn::Graph& g, double target, nn::Var frame_scores, nn::Var utterance_score,
                    const LossConfig& cfg, Metric m);

// Which heads the objective needs.
std::array<bool, kNumMetrics> required_heads(const LossConfig& cfg);

// Composition O = L_superv + L_semi, with each metric term averaged over the
// utterances that carry that label. Metrics enabled but labeled nowhere
// contribute 0 and increment *warnings.
LossBreakdown total_objective(std::span<const LabelSet> labels,
                              std::span<const PredictionSet> predictions, const LossConfig& cfg,
                              std::size_t* warnings = nullptr);

struct GraphObjective {
  nn::Var objective;
  LossBreakdown values;
};

GraphObjective total_objective(nn::Graph& g, std::span<const LabelSet> labels,
                               std::span<const HeadVars> predictions, const LossConfig& cfg,
                               std::size_t* warnings = nullptr);

}  // namespace mtq::train
