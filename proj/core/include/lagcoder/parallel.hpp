#pragma once

#include <cstddef>
#include <functional>

namespace lagcoder {

/// Worker count from LAGCODER_THREADS, falling back to hardware concurrency.
int default_thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Tasks must write to
/// disjoint outputs; the result is then independent of the schedule. The
/// exception thrown by the lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace lagcoder
