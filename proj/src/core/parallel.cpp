#include "masa/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace masa {
namespace {

std::size_t initial_workers() noexcept {
  if (const char* env = std::getenv("MASA_KIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<std::size_t> g_workers{0};

// Below this much work per call, threads cost more than they save.
constexpr std::size_t kMinParallelWork = std::size_t{1} << 16;

}  // namespace

std::size_t worker_count() noexcept {
  std::size_t w = g_workers.load(std::memory_order_relaxed);
  if (w == 0) {
    w = initial_workers();
    g_workers.store(w, std::memory_order_relaxed);
  }
  return w;
}

void set_worker_count(std::size_t n) noexcept { g_workers.store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, std::size_t cost_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1 || n * cost_per_item < kMinParallelWork) {
    if (n > 0) body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t begin = chunk; begin < n; begin += chunk) {
    pool.emplace_back([&body, begin, end = std::min(n, begin + chunk)] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
}

}  // namespace masa
