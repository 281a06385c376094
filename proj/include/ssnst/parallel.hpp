#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace ssnst {

/// Worker count for `jobs` independent tasks: `requested` if positive,
/// else SSNST_THREADS, else the hardware concurrency.
inline int worker_count(std::size_t jobs, int requested = 0) {
  int cap = requested;
  if (cap <= 0)
    if (const char* env = std::getenv("SSNST_THREADS")) cap = std::atoi(env);
  if (cap <= 0) cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(cap, static_cast<int>(std::max<std::size_t>(jobs, 1))));
}

/// Runs fn(i) for i in [0, n) on a small pool. The first exception (by
/// index) is rethrown after all workers have joined.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1 || n <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ssnst
