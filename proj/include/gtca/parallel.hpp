#pragma once

#include <cstddef>
#include <functional>

namespace gtca {

// Worker count used by parallel_for; 1 runs inline. Defaults to 1.
void set_worker_count(std::size_t jobs);
std::size_t worker_count();

// Calls body(i) for i in [0, n). Iterations must be independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gtca
