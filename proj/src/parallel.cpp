#include "bsdelab/parallel.hpp"

#include <atomic>

namespace bsdelab {

namespace {
std::atomic<std::size_t> g_workers{1};
}

void set_worker_count(std::size_t workers) { g_workers = std::max<std::size_t>(1, workers); }

std::size_t worker_count() { return g_workers.load(); }

void parallel_blocks(std::size_t count, std::size_t block,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    block = std::max<std::size_t>(1, block);
    const std::size_t nblocks = (count + block - 1) / block;
    const std::size_t workers = std::min(worker_count(), nblocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < nblocks; ++b) fn(b * block, std::min(count, (b + 1) * block));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            try {
                fn(b * block, std::min(count, (b + 1) * block));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = nblocks;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> block_sum(std::size_t count, std::size_t block, std::size_t width,
                              const std::function<void(std::size_t, std::size_t, double*)>& partial) {
    block = std::max<std::size_t>(1, block);
    const std::size_t nblocks = (count + block - 1) / block;
    std::vector<double> partials(nblocks * width, 0.0);
    parallel_blocks(nblocks, 1, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b)
            partial(b * block, std::min(count, (b + 1) * block), partials.data() + b * width);
    });
    std::vector<double> total(width, 0.0);
    for (std::size_t b = 0; b < nblocks; ++b)
        for (std::size_t k = 0; k < width; ++k) total[k] += partials[b * width + k];
    return total;
}

}  // namespace bsdelab
