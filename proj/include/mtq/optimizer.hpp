#pragma once

#include "mtq/autodiff.hpp"

#include <cstdint>
#include <functional>

namespace mtq::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected adaptive-moment update over every parameter; step_index
// starts at 1. post_step runs after the update (e.g. cutoff clamping).
void adam_step(ParamStore& params, const AdamConfig& cfg, std::uint64_t step_index,
               const std::function<void()>& post_step = {});

}  // namespace mtq::nn
