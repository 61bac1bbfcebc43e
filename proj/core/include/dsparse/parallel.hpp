#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace dsparse {

// Worker count from DSPARSE_THREADS, falling back to hardware concurrency.
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
// write results into per-index slots so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// splitmix64 finalizer; derives independent stream seeds from (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace dsparse
