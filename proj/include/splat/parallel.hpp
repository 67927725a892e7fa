#pragma once

#include <cstdint>
#include <functional>

namespace splat {

// Process-wide worker count. Parallel loops partition work into contiguous
// index ranges, so every element is computed by exactly one worker with a
// fixed inner order; results are bitwise independent of the thread count.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over a static partition of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace splat
