#pragma once

#include <cstddef>
#include <functional>

namespace spinbath {

/// Number of workers used when a caller passes jobs = 0.
unsigned default_jobs();

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index runs exactly
/// once; callers write results into preallocated slots so output order never
/// depends on scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, unsigned jobs, std::function<void(std::size_t)> const& body);

} // namespace spinbath
