#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace xfuse {

// Worker count: XFUSE_THREADS when set (floor 1), otherwise the hardware
// count. Results must not depend on this number.
inline size_t thread_budget() {
    if (const char* env = std::getenv("XFUSE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        return v < 1 ? 1 : static_cast<size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Each index owns its output slot, so any
// schedule produces identical results. The first exception is rethrown after
// all workers join.
template <typename Fn>
inline void parallel_for(size_t n, Fn&& fn) {
    const size_t workers = std::min(thread_budget(), n == 0 ? size_t{1} : n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto run_block = [&](size_t begin, size_t end) {
        try {
            for (size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!first_error) first_error = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    const size_t chunk = (n + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
        const size_t begin = w * chunk;
        const size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(run_block, begin, end);
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace xfuse
