#pragma once

// Spatial and temporal decay matrices. Tokens on an H x W grid are flattened
// row-major: n = y * W + x.

#include <cstddef>
#include <vector>

#include "masa/core/tensor.hpp"

namespace masa {

// Per-head decay rates for a receptive-field interval [a, b]:
//   gamma_i = 1 - 2^(-a - (b - a) * i / N),  i = 1..N.
struct DecaySpec {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> gammas;

  std::size_t num_heads() const noexcept { return gammas.size(); }
};

DecaySpec gamma_schedule(double a, double b, std::size_t num_heads);

class GridShape {
 public:
  GridShape(std::size_t height, std::size_t width);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t tokens() const noexcept { return height_ * width_; }

  std::size_t x_of(std::size_t n) const noexcept { return n % width_; }
  std::size_t y_of(std::size_t n) const noexcept { return n / width_; }
  std::size_t index(std::size_t x, std::size_t y) const noexcept { return y * width_ + x; }
  std::size_t manhattan(std::size_t n, std::size_t m) const noexcept;

  bool operator==(const GridShape&) const = default;

 private:
  std::size_t height_;
  std::size_t width_;
};

// D[n, m] = gamma^(n - m) for n >= m, else 0.
Tensor decay_causal_1d(std::size_t length, double gamma);
// D[n, m] = gamma^|n - m|.
Tensor decay_bidirectional_1d(std::size_t length, double gamma);
// D[n, m] = gamma^(|x_n - x_m| + |y_n - y_m|), shape [H*W, H*W].
Tensor decay_manhattan_2d(const GridShape& grid, double gamma);

struct AxialDecay {
  Tensor height;  // [H, H], gamma^|y_n - y_m|
  Tensor width;   // [W, W], gamma^|x_n - x_m|
};

AxialDecay decay_axial_pair(const GridShape& grid, double gamma);

// Kronecker product of two matrices: kron(A, B)[i*p + k, j*q + l] = A[i, j] * B[k, l].
// With the row-major token order, kron(DH, DW) reproduces decay_manhattan_2d.
Tensor kronecker(const Tensor& a, const Tensor& b);

// Decay rate as consumed by attention: a gamma in (0, 1), or none() which
// turns the decay matrix into all ones (plain softmax attention).
class Decay {
 public:
  static Decay rate(double gamma);
  static Decay none() noexcept { return Decay(1.0); }

  double gamma() const noexcept { return gamma_; }
  bool enabled() const noexcept { return gamma_ < 1.0; }

 private:
  explicit Decay(double gamma) noexcept : gamma_(gamma) {}
  double gamma_;
};

}  // namespace masa
