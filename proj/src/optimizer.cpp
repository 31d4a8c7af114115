#include "mtq/optimizer.hpp"

#include "mtq/errors.hpp"

#include <cmath>

namespace mtq::nn {

void adam_step(ParamStore& params, const AdamConfig& cfg, std::uint64_t step_index,
               const std::function<void()>& post_step) {
  if (step_index == 0) throw ConfigError("adam: step_index starts at 1");
  const double t = static_cast<double>(step_index);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      double& m = p.first_moment[i];
      double& v = p.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      p.value[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    }
  }
  if (post_step) post_step();
}

}  // namespace mtq::nn
