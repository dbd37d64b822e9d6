#pragma once

#include <cstddef>
#include <functional>

namespace keylock {

// Worker cap: KEYLOCK_THREADS if set (clamped to >= 1), else hardware
// concurrency. Read once at first use.
std::size_t worker_count();

// Runs fn(lo, hi) over an even partition of [0, n) into contiguous chunks,
// one per worker. Callers must write disjoint state per index; results must
// not depend on the partition, so any worker count yields identical output.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace keylock
