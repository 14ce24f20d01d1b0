#include "masa/train/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "masa/core/error.hpp"

namespace masa {

void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                OptimState& state, double lr) {
  if (grads.size() != params.size()) {
    throw UsageError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw UsageError("adamw_step: optimizer state tracks a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() ||
        (!grads[i].empty() && grads[i].size() != params[i].numel())) {
      throw UsageError("adamw_step: shape mismatch for parameter " + std::to_string(i) + " " +
                       shape_str(params[i].shape()));
    }
  }

  const AdamWOptions& o = state.options;
  const double rate = lr > 0.0 ? lr : o.lr;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i].empty() ? 0.0 : grads[i][j];
      p[j] -= rate * o.weight_decay * p[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      p[j] -= rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + o.eps);
    }
  }
}

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace masa
