#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace msplat {

inline int resolve_threads(int requested) {
    if (requested > 0)
        return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

/// Runs fn(thread_index, begin, end) over a static contiguous partition of [0, n).
/// The partition depends only on (n, threads), so per-thread accumulations that
/// are reduced in thread order give run-to-run identical results for a fixed
/// thread count.
inline void parallel_for_chunks(size_t n, int threads,
                                const std::function<void(int, size_t, size_t)>& fn) {
    threads = resolve_threads(threads);
    if (n == 0)
        return;
    if (threads <= 1 || n == 1) {
        fn(0, 0, n);
        return;
    }
    size_t t = std::min(size_t(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (size_t i = 0; i < t; ++i) {
        size_t begin = n * i / t;
        size_t end = n * (i + 1) / t;
        pool.emplace_back([&, i, begin, end] {
            try {
                fn(int(i), begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

} // namespace msplat
