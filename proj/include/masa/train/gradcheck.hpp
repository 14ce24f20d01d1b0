#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "masa/core/tensor.hpp"

namespace masa {

struct GradcheckOptions {
  double eps = 1e-6;
  // Denominator floor of the relative error, so entries whose true gradient is
  // zero are judged on absolute error below this magnitude.
  double floor = 1e-3;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t input = 0;  // which input holds the worst coordinate
  std::size_t coord = 0;  // flat index inside that input
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>& inputs)>;

// Central differences on every coordinate of every input against the tape
// gradient. Inputs must be leaves; they are marked requires_grad, perturbed in
// place and restored. UsageError if fn does not return a scalar.
GradcheckResult finite_diff_gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs,
                                      GradcheckOptions options = {});

}  // namespace masa
