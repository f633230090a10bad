#pragma once

#include <cstddef>
#include <functional>

namespace pbench {

/// Runs fn(i) for i in [0, n) across worker threads. Each index is computed
/// exactly once and results must be written to preallocated, disjoint slots;
/// reductions happen afterwards in index order so that outputs do not depend
/// on the thread count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

/// Block variant: fn(begin, end) over a partition of [0, n).
void parallel_for_blocks(size_t n, const std::function<void(size_t, size_t)>& fn);

}  // namespace pbench
