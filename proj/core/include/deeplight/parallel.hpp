#pragma once

#include <cstddef>
#include <functional>

namespace dl {

/// Worker count: DEEPLIGHT_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dl
