#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace vidpoint {

/// Runs fn(i) for i in [0, count) across up to `workers` threads. Work is
/// claimed by atomic counter; each index is processed exactly once, so any
/// per-index output written by fn lands in a caller-owned slot and overall
/// results do not depend on scheduling.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

/// Worker cap from the environment (VIDPOINT_THREADS); falls back to the
/// hardware concurrency when unset or invalid.
std::size_t default_worker_count();

}  // namespace vidpoint
