#pragma once

// Data-parallel inner loops used by the tensor ops. Every routine has a scalar
// reference version; vector variants are selected once at runtime and must
// agree with the reference up to reassociation of floating point sums.

#include <cstddef>
#include <string_view>

namespace masa::simd {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  Backend backend;
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = alpha * x[i]
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // max_i x[i]; n must be positive
  double (*max)(const double* x, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

bool cpu_supports(Backend backend) noexcept;

// Active table. First use picks the best supported backend unless
// MASA_KIT_SIMD=scalar|avx2|neon|auto says otherwise.
const KernelTable& kernels() noexcept;

// Forces a backend; throws std::invalid_argument if it is unsupported here.
void select_backend(Backend backend);
Backend best_backend() noexcept;
std::string_view backend_name(Backend backend) noexcept;

namespace detail {
// Defined by the per-ISA translation units.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;
}  // namespace detail

}  // namespace masa::simd
