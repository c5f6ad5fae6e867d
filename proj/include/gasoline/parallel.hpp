#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gasoline {

// Worker cap: hardware concurrency, optionally lowered by GASOLINE_THREADS.
inline int worker_count() {
  static const int cached = [] {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw ? int(hw) : 1;
    if (const char* env = std::getenv("GASOLINE_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) n = std::min(n, cap);
    }
    return n;
  }();
  return cached;
}

// Runs fn(0..count-1) across up to worker_count() threads. Callers must
// write results into per-index slots; reductions happen after the join in
// index order, so scheduling never changes numerical results.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
  int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gasoline
