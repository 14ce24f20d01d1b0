#pragma once

// Differentiable tensor primitives. All ops are pure: they read their inputs
// and return a new tensor, recording an adjoint rule when gradients are on.

#include <cstddef>
#include <cstdint>
#include <span>

#include "masa/core/tensor.hpp"

namespace masa {

// Batched matrix product over the last two axes. Leading axes broadcast from
// size 1 (missing leading axes count as size 1).
Tensor matmul(const Tensor& a, const Tensor& b);

// Swaps the last two axes.
Tensor transpose(const Tensor& t);
Tensor permute(const Tensor& t, std::span<const std::size_t> axes);
Tensor permute(const Tensor& t, std::initializer_list<std::size_t> axes);
Tensor reshape(const Tensor& t, Shape shape);

// Softmax over the last axis with max subtraction.
Tensor softmax_last(const Tensor& t);

// Elementwise ops. `b` broadcasts to `a`'s shape: right-aligned, each axis of
// b either equal to a's or 1; a scalar b broadcasts everywhere.
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& t, double factor);
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
// [N, C] -> [C], averaging over rows.
Tensor mean_rows(const Tensor& t);

// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& t);

// Normalizes each last-axis slice, then applies gain and bias of shape [C].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

// [C, H, W] * scale[c] + shift[c]. Batch norm with frozen statistics reduces to this.
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift);

// Per-channel 2D cross-correlation, zero "same" padding, stride 1.
// x: [C, H, W], kernel: [C, k, k] with k odd.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel);

// Dense 2D cross-correlation. x: [Cin, H, W], weight: [Cout, Cin, k, k],
// bias: [Cout] or undefined. Output spatial size (H + 2p - k) / s + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Token layout [H*W, C] <-> image layout [C, H, W].
Tensor tokens_to_image(const Tensor& tokens, std::size_t height, std::size_t width);
Tensor image_to_tokens(const Tensor& image);

// Multiply-accumulates executed by forward ops on this thread. Counts matmul
// and convolution work only; elementwise work is free by convention.
std::uint64_t mac_count() noexcept;

class MacCounter {
 public:
  MacCounter() : start_(mac_count()) {}
  std::uint64_t count() const noexcept { return mac_count() - start_; }

 private:
  std::uint64_t start_;
};

namespace detail {
void add_macs(std::uint64_t n) noexcept;
}

}  // namespace masa
