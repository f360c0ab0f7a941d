#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace bdt {

/// Worker count from BAYES_D2T_THREADS (0 or unset = hardware).
inline int thread_count() {
    if (const char* env = std::getenv("BAYES_D2T_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Chunked parallel loop. Each index is processed exactly once and writes
/// only to its own slot, so results are independent of the thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace bdt
