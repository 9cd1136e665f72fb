#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rare {

/// Runs fn(i) for i in [0, n) on up to `threads` threads, in contiguous
/// chunks. fn must only write state owned by index i. The first exception
/// thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    workers.reserve(threads);
    std::size_t const chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        std::size_t const lo = t * chunk;
        std::size_t const hi = std::min(n, lo + chunk);
        if (lo >= hi) {
            break;
        }
        workers.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace rare
