#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace plesim {

/// Runs fn(begin, end) over contiguous chunks of [0, n) on `threads`
/// threads. With threads <= 1 the call is serial. Chunks are disjoint, so
/// the callable may write to per-index slots without synchronization.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        fn(0, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) {
        t.join();
    }
}

}  // namespace plesim
