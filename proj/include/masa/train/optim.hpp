#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "masa/core/tensor.hpp"

namespace masa {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimState {
  AdamWOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One decoupled-weight-decay Adam update of every parameter in place.
// `grads[i]` pairs with `params[i]`; an empty gradient counts as zero.
// `lr` overrides options.lr when positive (for schedules).
void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                OptimState& state, double lr = -1.0);

// Cosine decay from base_lr at step 0 towards 0 at total_steps, no warmup.
double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps);

}  // namespace masa
