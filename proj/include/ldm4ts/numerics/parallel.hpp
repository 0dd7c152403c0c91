#pragma once

#include <cstddef>
#include <functional>

namespace ldm4ts {

// Worker count from LDM4TS_NUM_WORKERS (default 1, clamped to >= 1).
std::size_t num_workers();

// Runs fn(i) for i in [0, n) over up to num_workers() threads. Each index is
// handled by exactly one thread; fn must not touch shared mutable state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ldm4ts
