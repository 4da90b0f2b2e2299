#pragma once

#include <cstddef>
#include <functional>

namespace recount {

/// Runs fn(i) for i in [0, n) on up to n_threads worker threads, in
/// contiguous index chunks. With n_threads <= 1 the calls run inline.
/// The first exception thrown by any worker is rethrown to the caller.
void parallel_for(std::size_t n, int n_threads,
                  const std::function<void(std::size_t)>& fn);

} // namespace recount
