#pragma once

#include <cstddef>
#include <functional>

namespace forge {

/// Runs task(i) for i in [0, count) on up to `threads` workers. Tasks must
/// write to disjoint outputs; callers reduce results in index order so the
/// outcome never depends on the worker count.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task);

/// Worker count from the BRDF_FORGE_THREADS environment variable, or 1.
std::size_t threads_from_environment();

}  // namespace forge
