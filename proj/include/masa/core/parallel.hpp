#pragma once

#include <cstddef>
#include <functional>

namespace masa {

// Worker count for kernel-internal parallelism. Defaults to the hardware
// concurrency; MASA_KIT_THREADS overrides it.
std::size_t worker_count() noexcept;
void set_worker_count(std::size_t n) noexcept;

// Runs body(begin, end) over disjoint chunks of [0, n). Runs inline when only
// one worker is configured or when n * cost_per_item is small.
void parallel_for(std::size_t n, std::size_t cost_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace masa
