#pragma once

#include <cstddef>
#include <functional>

namespace semicomp {

// Global worker cap. 0 means "not set": SEMICOMP_THREADS is consulted, then 1.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs body(i) for i in [0, n) on up to max_threads() workers. Items are
// claimed dynamically, so a body that writes only to slot i gives results
// that do not depend on the thread count. Calls made from inside a worker run
// inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace semicomp
