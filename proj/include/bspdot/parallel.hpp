#pragma once

#include <cstddef>
#include <functional>

namespace bspdot {

/// Worker count for blockwise loops, read once from BSPDOT_NUM_THREADS
/// (default 1). Values < 1 are treated as 1.
int thread_count();

/// Runs body(k) for k in [0, n). Each index must write only its own outputs;
/// results are then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bspdot
