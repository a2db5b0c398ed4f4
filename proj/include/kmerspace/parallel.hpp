#pragma once

#include <cstddef>
#include <functional>

namespace kmerspace {

/// Worker cap: hardware concurrency, lowered by the KMERSPACE_THREADS environment variable.
std::size_t thread_count();

/// Runs fn(begin, end) over disjoint chunks of [0, n). Chunk boundaries depend only on
/// n and the worker count, and each index is handled by exactly one call, so callers
/// that write per-index results get output independent of scheduling.
void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace kmerspace
