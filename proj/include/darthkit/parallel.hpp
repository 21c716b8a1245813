#pragma once

#include <cstddef>
#include <functional>

namespace darthkit {

/// Worker cap: DARTHKIT_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int max_threads();

/// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
/// results do not depend on the thread count. The first exception thrown by
/// any worker is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace darthkit
