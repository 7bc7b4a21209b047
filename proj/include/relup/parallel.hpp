#pragma once

#include <cstddef>
#include <functional>

namespace relup {

/// Runs fn(i) for i in [0, n) across worker threads. fn must be safe to call
/// concurrently for distinct i; work is index-partitioned, so deterministic
/// per-index computations give identical results for any thread count.
void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace relup
