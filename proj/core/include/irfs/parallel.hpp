#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace irfs {

/// Worker cap for data-parallel loops: IRFS_NUM_WORKERS when set, otherwise
/// the hardware concurrency (at least 1).
inline int worker_count() {
    if (const char* env = std::getenv("IRFS_NUM_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

/// Runs fn(0..n-1) across up to worker_count() threads. Callers must write
/// only to disjoint slots so results stay order-independent.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int workers = std::min<int64_t>(worker_count(), n);
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int64_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

} // namespace irfs
