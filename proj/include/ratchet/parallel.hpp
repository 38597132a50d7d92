#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ratchet {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
// contiguous blocks; fn must only write state owned by index i, so results
// never depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * block;
        const std::size_t end = std::min(n, begin + block);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

// Pairwise (cascade) summation in fixed index order.
template <typename Range>
double pairwise_sum(const Range& values, std::size_t begin, std::size_t end) {
    const std::size_t len = end - begin;
    if (len <= 8) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += values[i];
        return s;
    }
    const std::size_t mid = begin + len / 2;
    return pairwise_sum(values, begin, mid) + pairwise_sum(values, mid, end);
}

} // namespace ratchet
