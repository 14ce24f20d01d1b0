#include "masa/decay.hpp"

#include <cmath>
#include <string>

#include "masa/core/error.hpp"

namespace masa {
namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("decay rate gamma must lie in (0, 1), got " + std::to_string(gamma));
  }
}

// gamma^e for small non-negative integer exponents, by a table so every entry
// of a decay matrix with the same distance is bit-identical.
std::vector<double> powers(double gamma, std::size_t max_exp) {
  std::vector<double> p(max_exp + 1);
  for (std::size_t e = 0; e <= max_exp; ++e) p[e] = std::pow(gamma, static_cast<double>(e));
  return p;
}

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace

DecaySpec gamma_schedule(double a, double b, std::size_t num_heads) {
  if (!(a > 0.0) || !(a < b) || !std::isfinite(b)) {
    throw ConfigError("decay range needs 0 < a < b, got a=" + std::to_string(a) +
                      " b=" + std::to_string(b));
  }
  if (num_heads == 0) throw ConfigError("decay schedule needs at least one head");
  DecaySpec spec{a, b, {}};
  spec.gammas.reserve(num_heads);
  const double n = static_cast<double>(num_heads);
  for (std::size_t i = 1; i <= num_heads; ++i) {
    spec.gammas.push_back(1.0 - std::exp2(-a - (b - a) * static_cast<double>(i) / n));
  }
  return spec;
}

GridShape::GridShape(std::size_t height, std::size_t width) : height_(height), width_(width) {
  if (height == 0 || width == 0) {
    throw DimensionError("grid dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
}

std::size_t GridShape::manhattan(std::size_t n, std::size_t m) const noexcept {
  return absdiff(x_of(n), x_of(m)) + absdiff(y_of(n), y_of(m));
}

Tensor decay_causal_1d(std::size_t length, double gamma) {
  check_gamma(gamma);
  if (length == 0) throw DimensionError("decay length must be positive");
  const auto p = powers(gamma, length - 1);
  std::vector<double> d(length * length, 0.0);
  for (std::size_t n = 0; n < length; ++n)
    for (std::size_t m = 0; m <= n; ++m) d[n * length + m] = p[n - m];
  return Tensor::from({length, length}, std::move(d));
}

Tensor decay_bidirectional_1d(std::size_t length, double gamma) {
  check_gamma(gamma);
  if (length == 0) throw DimensionError("decay length must be positive");
  const auto p = powers(gamma, length - 1);
  std::vector<double> d(length * length);
  for (std::size_t n = 0; n < length; ++n)
    for (std::size_t m = 0; m < length; ++m) d[n * length + m] = p[absdiff(n, m)];
  return Tensor::from({length, length}, std::move(d));
}

Tensor decay_manhattan_2d(const GridShape& grid, double gamma) {
  check_gamma(gamma);
  const std::size_t N = grid.tokens();
  const auto p = powers(gamma, grid.height() + grid.width() - 2);
  std::vector<double> d(N * N);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < N; ++m) d[n * N + m] = p[grid.manhattan(n, m)];
  return Tensor::from({N, N}, std::move(d));
}

AxialDecay decay_axial_pair(const GridShape& grid, double gamma) {
  return {decay_bidirectional_1d(grid.height(), gamma), decay_bidirectional_1d(grid.width(), gamma)};
}

Tensor kronecker(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("kronecker needs matrices, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t ra = a.dim(0), ca = a.dim(1), rb = b.dim(0), cb = b.dim(1);
  const auto& da = a.values();
  const auto& db = b.values();
  const std::size_t cols = ca * cb;
  std::vector<double> out(ra * rb * cols);
  for (std::size_t i = 0; i < ra; ++i)
    for (std::size_t k = 0; k < rb; ++k)
      for (std::size_t j = 0; j < ca; ++j)
        for (std::size_t l = 0; l < cb; ++l)
          out[(i * rb + k) * cols + j * cb + l] = da[i * ca + j] * db[k * cb + l];
  return Tensor::from({ra * rb, cols}, std::move(out));
}

Decay Decay::rate(double gamma) {
  check_gamma(gamma);
  return Decay(gamma);
}

}  // namespace masa
