#pragma once

#include <cstddef>
#include <functional>

namespace sail {

/// Worker count used by parallel_for. Defaults to the hardware concurrency,
/// or SAIL_THREADS when set.
int thread_count();
void set_thread_count(int n);

/// Runs body(k) for k in [0, n) on up to thread_count() threads. Each index
/// is processed exactly once; the first exception is rethrown after all
/// workers have joined. Results must be written to per-index slots so the
/// outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sail
