#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace fpt::detail {

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is handled by exactly one
// call, so results do not depend on the number of threads. The first exception raised by a
// worker is rethrown on the calling thread.
template <class F>
void parallel_chunks(int n, int threads, F&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int lo = static_cast<int>(static_cast<long>(n) * t / threads);
    const int hi = static_cast<int>(static_cast<long>(n) * (t + 1) / threads);
    pool.emplace_back([&fn, &errors, t, lo, hi] {
      try {
        if (lo < hi) fn(lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fpt::detail
