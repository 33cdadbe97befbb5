#pragma once

#include <cstddef>
#include <functional>

namespace facedet {

// Process-wide cap on worker threads. 0 means "all available cores".
void set_worker_count(std::size_t workers);
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Indices are dealt to workers in fixed
/// contiguous blocks; body must write only to state owned by index i, so the
/// result never depends on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace facedet
