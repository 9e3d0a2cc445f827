#pragma once

#include <functional>

namespace lutfuse {

// Worker count: LUTFUSE_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
int default_thread_count();

// Splits [0, rows) into contiguous bands, one per worker, and runs
// fn(begin, end) on each. Runs inline when threads <= 1.
void parallel_rows(int rows, int threads, const std::function<void(int, int)>& fn);

}  // namespace lutfuse
