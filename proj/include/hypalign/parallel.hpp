#pragma once

#include <cstddef>
#include <functional>

namespace hypalign {

/// Worker count: HYPOT_THREADS when set to a positive integer, otherwise the
/// number of CPUs the process may run on (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Indices are split into contiguous blocks,
/// one per worker; each index is handled by exactly one call, so writes to
/// per-index outputs are deterministic regardless of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hypalign
