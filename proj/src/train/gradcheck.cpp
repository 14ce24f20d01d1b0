#include "masa/train/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"

namespace masa {

GradcheckResult finite_diff_gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs,
                                      GradcheckOptions options) {
  if (!(options.eps > 0.0)) throw UsageError("gradcheck step must be positive");
  for (Tensor& t : inputs) {
    if (!t.is_leaf()) throw UsageError("gradcheck inputs must be leaf tensors");
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor out = fn(inputs);
  if (out.numel() != 1) {
    throw UsageError("gradcheck needs a scalar-valued function, got shape " + shape_str(out.shape()));
  }
  backward(out);

  GradcheckResult result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    auto data = t.mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      const double hi = orig + options.eps;
      const double lo = orig - options.eps;
      data[j] = hi;
      const double plus = fn(inputs).item();
      data[j] = lo;
      const double minus = fn(inputs).item();
      data[j] = orig;
      // Divide by the step actually taken, not the nominal one.
      const double numeric = (plus - minus) / (hi - lo);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), options.floor});
      const double err = std::abs(analytic[j] - numeric) / denom;
      ++result.checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.input = i;
        result.coord = j;
        result.analytic = analytic[j];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace masa
