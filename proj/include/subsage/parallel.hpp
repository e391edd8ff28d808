#pragma once

#include <cstddef>
#include <functional>

namespace subsage {

// Worker count used by library routines; defaults to the hardware
// concurrency. Results never depend on this value.
int thread_count();
void set_thread_count(int threads);

// Calls body(begin, end) on disjoint contiguous chunks covering [0, n).
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace subsage
