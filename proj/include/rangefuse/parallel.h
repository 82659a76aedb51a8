#pragma once

#include <cstddef>
#include <functional>

namespace rangefuse {

/// Worker count: RANGEFUSE_THREADS if set and positive, else hardware
/// concurrency. Always at least one.
int worker_count();

/// Runs body(begin, end) over disjoint contiguous chunks of [0, n). Chunks
/// never share output, so results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace rangefuse
