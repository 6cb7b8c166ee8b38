#pragma once

#include <cstddef>
#include <functional>

namespace omad {

// Worker count for internal parallelism: OMAD_THREADS if set and positive,
// otherwise the hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
// visited exactly once; callers write results into pre-sized slots so the
// assembled output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace omad
