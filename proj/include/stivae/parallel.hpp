#pragma once

#include <cstddef>
#include <functional>

namespace stivae {

/// Runs task(i) for i in [0, count) on up to `jobs` threads. The exception of
/// the lowest failing index is rethrown after all threads finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

}  // namespace stivae
