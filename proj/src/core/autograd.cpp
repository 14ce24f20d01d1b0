#include "masa/core/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "masa/core/error.hpp"

namespace masa {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

void accumulate_grad(const Tensor& t, std::span<const double> g) {
  TensorImpl& impl = t.impl();
  if (impl.grad.empty()) {
    impl.grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) impl.grad[i] += g[i];
}

std::span<double> grad_buffer(const Tensor& t) {
  TensorImpl& impl = t.impl();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

}  // namespace detail

Tensor make_result(std::string_view name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const detail::TensorImpl& out)> backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(name) + " produced a non-finite value");
    }
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    node->name = name;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    impl->grad_fn = std::move(node);
  }
  return detail::wrap(std::move(impl));
}

namespace {

// Reverse topological order of the tensors reachable from `root`.
std::vector<detail::TensorImpl*> topo_order(detail::TensorImpl* root) {
  std::vector<detail::TensorImpl*> post;
  std::unordered_set<detail::TensorImpl*> seen;
  struct Frame {
    detail::TensorImpl* impl;
    std::size_t next;
  };
  std::vector<Frame> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& node = f.impl->grad_fn;
    if (node && f.next < node->inputs.size()) {
      detail::TensorImpl* child = &node->inputs[f.next++].impl();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      continue;
    }
    post.push_back(f.impl);
    stack.pop_back();
  }
  return {post.rbegin(), post.rend()};
}

}  // namespace

std::vector<const detail::Node*> grad_tape(const Tensor& loss) {
  std::vector<const detail::Node*> tape;
  if (!loss.requires_grad()) return tape;
  for (detail::TensorImpl* impl : topo_order(&loss.impl())) {
    if (impl->grad_fn) tape.push_back(impl->grad_fn.get());
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that is detached from every tracked tensor");
  }
  detail::TensorImpl& root = loss.impl();
  if (root.grad_fn && root.grad_fn->consumed) {
    throw UsageError("backward() already ran on this graph; rebuild the forward pass first");
  }

  const auto order = topo_order(&root);
  root.grad.assign(1, 1.0);
  for (detail::TensorImpl* impl : order) {
    if (!impl->grad_fn) continue;
    detail::Node& node = *impl->grad_fn;
    if (!impl->grad.empty()) node.backward(*impl);
    node.consumed = true;
    // Interior adjoints are not needed once propagated.
    if (impl != &root) std::vector<double>().swap(impl->grad);
  }
}

}  // namespace masa
