#pragma once

#include <cstddef>
#include <functional>

namespace safcov {

/// Calls task(i) for every i in [0, n) on up to `jobs` threads. Tasks must
/// write only to index-owned slots; the first exception is rethrown after all
/// workers finish. jobs <= 1 runs inline.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task);

/// Worker count for --jobs 0: the hardware concurrency (at least 1).
int default_jobs();

}  // namespace safcov
