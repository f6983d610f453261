#pragma once

#include <cstddef>
#include <functional>

namespace climber {

/// Worker count: CLIMBER_THREADS when set to a positive integer, otherwise
/// the hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Exceptions
/// from any worker are rethrown on the caller after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace climber
