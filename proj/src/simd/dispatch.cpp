#include "masa/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace masa::simd {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* table_for(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar: return &scalar_kernels();
    case Backend::avx2: return avx2_kernels();
    case Backend::neon: return neon_kernels();
  }
  return nullptr;
}

const KernelTable* initial_table() noexcept {
  const KernelTable* chosen = table_for(best_backend());
  if (const char* env = std::getenv("MASA_KIT_SIMD")) {
    const std::string want{env};
    const KernelTable* forced = nullptr;
    if (want == "scalar") forced = &scalar_kernels();
    else if (want == "avx2") forced = avx2_kernels();
    else if (want == "neon") forced = neon_kernels();
    if (forced != nullptr) chosen = forced;
  }
  return chosen;
}

}  // namespace

bool cpu_supports(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar: return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon: return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable* avx2_kernels() noexcept {
  return cpu_supports(Backend::avx2) ? detail::avx2_table() : nullptr;
}

const KernelTable* neon_kernels() noexcept {
  return cpu_supports(Backend::neon) ? detail::neon_table() : nullptr;
}

Backend best_backend() noexcept {
  if (cpu_supports(Backend::avx2)) return Backend::avx2;
  if (cpu_supports(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

const KernelTable& kernels() noexcept {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    const KernelTable* fresh = initial_table();
    if (g_active.compare_exchange_strong(t, fresh, std::memory_order_acq_rel)) t = fresh;
  }
  return *t;
}

void select_backend(Backend backend) {
  const KernelTable* t = table_for(backend);
  if (t == nullptr) {
    throw std::invalid_argument("SIMD backend '" + std::string(backend_name(backend)) +
                                "' is not available on this machine");
  }
  g_active.store(t, std::memory_order_release);
}

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

}  // namespace masa::simd
