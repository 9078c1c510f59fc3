#pragma once

#include <cstddef>
#include <functional>

namespace mdepth {

/// Worker count from MDEPTH_THREADS: 0 or unset means hardware concurrency,
/// 1 is the strict single-threaded mode.
std::size_t configured_threads();

/// Overrides the environment for the current process (tests, CLI flags).
void set_thread_override(std::size_t threads);

/// Runs fn(i) for i in [0, count). Each index is handled by exactly one
/// worker, so results do not depend on the thread count as long as fn only
/// writes state owned by its index.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace mdepth
