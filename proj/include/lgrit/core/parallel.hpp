#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace lgrit {

/// Upper bound on worker threads for parallel_for. 1 means run inline.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges,
/// so results written per index are identical for any thread count. The
/// first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lgrit
