#pragma once

#include <cstddef>
#include <functional>

namespace unifex {

/// Worker count: UNIFEX_THREADS if set to a positive integer, else hardware concurrency.
std::size_t max_threads();

/// Runs body(i) for i in [0, n) across up to max_threads() workers.
/// Each index is visited exactly once; callers must write only to per-index
/// outputs so the result does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace unifex
