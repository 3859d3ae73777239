#pragma once

#include <cstddef>
#include <functional>

namespace irseg {

/// Worker count: IRSEG_THREADS if set and positive, else hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index runs
/// exactly once; callers write results into index-addressed slots so the outcome
/// does not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace irseg
