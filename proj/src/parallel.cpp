#include "keylock/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace keylock {

std::size_t worker_count() {
  static const std::size_t cached = [] {
    if (const char* env = std::getenv("KEYLOCK_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return std::size_t(v);
      return std::size_t(1);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return std::size_t(hw ? hw : 1);
  }();
  return cached;
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (n == 0) return;
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = std::min(n, w * chunk);
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back(fn, lo, hi);
  }
  fn(0, std::min(n, chunk));
  for (std::thread& t : pool) t.join();
}

}  // namespace keylock
