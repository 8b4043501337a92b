#pragma once

// Minimal fork-join loop used for per-sample post-processing. Thread count
// comes from ECOFLUX_THREADS when set (0 or 1 disables threading), else
// the hardware concurrency. Exceptions from workers are rethrown on the
// calling thread (first one wins).

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ecoflux::detail {

inline unsigned max_threads() {
  if (const char* env = std::getenv("ECOFLUX_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v <= 1) return 1;
    return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t)>& body) {
  unsigned workers = max_threads();
  if (workers > count) workers = static_cast<unsigned>(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::once_flag error_once;
  auto run = [&]() {
    try {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    } catch (...) {
      std::call_once(error_once, [&] { error = std::current_exception(); });
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ecoflux::detail
