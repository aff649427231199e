#pragma once

#include <cstddef>
#include <functional>

namespace slicevol {

/// Worker count: SLICEVOL_THREADS if set (>= 1), otherwise the hardware
/// concurrency.
unsigned worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Work items
/// must be independent; results are written by index so the outcome does not
/// depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace slicevol
