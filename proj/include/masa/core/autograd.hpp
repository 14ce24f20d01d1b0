#pragma once

// Reverse-mode differentiation. Every op that sees a tracked input attaches a
// Node to its result; backward() orders the reachable nodes topologically
// (the tape) and replays their adjoint rules once.

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "masa/core/tensor.hpp"

namespace masa {

namespace detail {

struct TensorImpl;

struct Node {
  std::string_view name;
  std::vector<Tensor> inputs;
  // Reads out.grad and accumulates into the inputs that require grad.
  std::function<void(const TensorImpl& out)> backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::shared_ptr<Node> grad_fn;
};

// Adds `g` into t's gradient buffer, allocating it on first use.
void accumulate_grad(const Tensor& t, std::span<const double> g);
// Gradient buffer of t, allocated zero-filled on first use.
std::span<double> grad_buffer(const Tensor& t);

}  // namespace detail

bool grad_enabled() noexcept;

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the result tensor of an op. The result is finite-checked; when graph
// recording is on and any input requires grad, `backward` is attached.
Tensor make_result(std::string_view name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const detail::TensorImpl& out)> backward);

// The ordered list of nodes backward() would replay from `loss`, leaves last.
std::vector<const detail::Node*> grad_tape(const Tensor& loss);

// Seeds d(loss)/d(loss) = 1 and populates grad on every tracked leaf.
// UsageError on a non-scalar loss, on a loss with no tracked history, or when
// the graph was already replayed.
void backward(const Tensor& loss);

}  // namespace masa
