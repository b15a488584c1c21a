#pragma once

#include <atomic>
#include <cstdlib>
#include <cstddef>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace deepvol {

// Worker count: DEEPVOL_THREADS env var if set, else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("DEEPVOL_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1u;
}

// Runs body(block_index, lo, hi) over [0, n) split into fixed-size blocks.
// The block decomposition depends only on (n, block_size), never on the
// worker count, so callers that store per-block partial results and reduce
// them in block order get bit-identical output on any machine. Exceptions
// thrown by the body are captured and rethrown on the calling thread.
template <class Body>
void parallel_blocks(std::size_t n, std::size_t block_size, Body&& body,
                     unsigned workers = 0) {
    if (n == 0) return;
    if (block_size == 0) block_size = 1;
    const std::size_t nblocks = (n + block_size - 1) / block_size;
    if (workers == 0) workers = worker_count();
    if (workers > nblocks) workers = static_cast<unsigned>(nblocks);

    if (workers <= 1) {
        for (std::size_t bi = 0; bi < nblocks; ++bi) {
            const std::size_t lo = bi * block_size;
            const std::size_t hi = std::min(n, lo + block_size);
            body(bi, lo, hi);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto run = [&] {
        for (;;) {
            const std::size_t bi = next.fetch_add(1, std::memory_order_relaxed);
            if (bi >= nblocks) return;
            const std::size_t lo = bi * block_size;
            const std::size_t hi = std::min(n, lo + block_size);
            try {
                body(bi, lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// Convenience: per-block partial sums reduced in ascending block order so the
// result is independent of how blocks were scheduled across workers.
template <class PerBlock>
double parallel_block_sum(std::size_t n, std::size_t block_size, PerBlock&& per_block,
                          unsigned workers = 0) {
    if (n == 0) return 0.0;
    if (block_size == 0) block_size = 1;
    const std::size_t nblocks = (n + block_size - 1) / block_size;
    std::vector<double> partial(nblocks, 0.0);
    parallel_blocks(
        n, block_size,
        [&](std::size_t bi, std::size_t lo, std::size_t hi) { partial[bi] = per_block(bi, lo, hi); },
        workers);
    double s = 0.0;
    for (double v : partial) s += v;
    return s;
}

}  // namespace deepvol
