#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace specsplit {

/// Worker count: SPEC_SPLIT_THREADS caps it, hardware concurrency otherwise.
inline unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPEC_SPLIT_THREADS")) {
        try {
            long cap = std::stol(env);
            if (cap >= 1) return static_cast<unsigned>(std::min<long>(cap, 256));
        } catch (...) {
        }
    }
    return hw;
}

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index is written
/// by exactly one worker, so callers that store per-index results and merge
/// them sequentially get results independent of the worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body, unsigned workers = worker_count()) {
    workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(n, 1)));
    if (workers <= 1 || n < 256) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace specsplit
