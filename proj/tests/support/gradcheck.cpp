#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mtq::testing {

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const LossBuilder& loss) {
  nn::Graph g;
  g.set_grad_enabled(false);
  g.set_branch_tracking(true);
  const double v = g.value(loss(g))[0];
  return {v, g.branch_signature()};
}

std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= k) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

GradCheckResult check_gradients(nn::ParamStore& params, const LossBuilder& loss, double h,
                                std::size_t max_per_param, std::uint64_t seed, double abs_floor) {
  params.zero_grad();
  {
    nn::Graph g;
    g.backward(loss(g));
  }
  const std::uint64_t base = evaluate(loss).signature;
  GradCheckResult r;
  std::mt19937_64 rng(seed);
  for (nn::Parameter& p : params) {
    for (std::size_t i : sample_positions(p.value.size(), max_per_param, rng)) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const Evaluation up = evaluate(loss);
      p.value[i] = orig - h;
      const Evaluation down = evaluate(loss);
      p.value[i] = orig;
      if (up.signature != base || down.signature != base) {
        ++r.skipped_kinks;
        continue;
      }
      const double numeric = (up.value - down.value) / (2.0 * h);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                  " numeric=" + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace mtq::testing
