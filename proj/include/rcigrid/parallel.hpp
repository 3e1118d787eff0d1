#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace rcigrid {

/// Worker cap from RCIGRID_THREADS, defaulting to the hardware count.
inline int worker_threads() {
    if (const char* env = std::getenv("RCIGRID_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n). Results must be written to per-index slots;
/// the schedule is then irrelevant to the outcome. Exceptions are rethrown
/// for the lowest index that failed.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int t_count = std::min(worker_threads(), n);
    if (t_count <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(t_count);
    for (int t = 0; t < t_count; ++t) {
        pool.emplace_back([&]() {
            int i;
            while ((i = next.fetch_add(1)) < n) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (int i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace rcigrid
