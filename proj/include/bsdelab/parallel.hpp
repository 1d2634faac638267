#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace bsdelab {

// Process-wide worker count. It changes speed only: every parallel loop
// below splits work into fixed blocks whose results are combined in block
// order, independently of how many threads executed them.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

// Calls fn(begin, end) for consecutive blocks of `block` indices covering
// [0, count). Blocks are claimed dynamically; fn must write only to
// locations owned by its block.
void parallel_blocks(std::size_t count, std::size_t block,
                     const std::function<void(std::size_t, std::size_t)>& fn);

// Deterministic sum of per-block partials. `partial(begin, end, acc)` adds
// the contribution of its block into acc (length width); the partials are
// then reduced sequentially in block order.
std::vector<double> block_sum(std::size_t count, std::size_t block, std::size_t width,
                              const std::function<void(std::size_t, std::size_t, double*)>& partial);

inline constexpr std::size_t reduction_block = 4096;

}  // namespace bsdelab
