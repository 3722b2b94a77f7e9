#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sde {

// Runs body(i) for i in [0, n). Each index is claimed atomically, so the
// schedule varies between runs, but callers only ever write to per-index
// slots keyed by i; combined with keyed RNG substreams this makes every
// study independent of the worker count. The first exception thrown by a
// body is rethrown on the calling thread.
inline void parallel_for(int workers, std::int64_t n,
                         const std::function<void(std::int64_t)>& body) {
  if (n <= 0) return;
  if (workers < 1) workers = 1;
  if (static_cast<std::int64_t>(workers) > n) workers = static_cast<int>(n);
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto work = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next.store(n, std::memory_order_relaxed);  // drain remaining work
        return;
      }
    }
  };
  std::vector<std::thread> ts;
  ts.reserve(workers);
  for (int w = 0; w < workers; ++w) ts.emplace_back(work);
  for (auto& t : ts) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace sde
