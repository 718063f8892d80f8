#pragma once

#include <cstddef>
#include <functional>

namespace gatk {

/// Worker count from GATK_THREADS, falling back to the number of logical cores.
std::size_t default_thread_count();

/// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Work items are claimed dynamically; callers write results by index so the
/// outcome does not depend on scheduling. The first exception thrown by any
/// item is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace gatk
