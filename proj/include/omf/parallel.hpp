#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace omf {

/// Splits [0, n) into contiguous chunks and runs `fn(begin, end, worker)` on up to
/// `threads` workers. Each index is visited by exactly one worker, so callers that write
/// results by index get output independent of the thread count. The first exception
/// thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(long n, int threads, Fn&& fn) {
    if (n <= 0) return;
    const long workers = std::clamp<long>(threads, 1, n);
    if (workers == 1) {
        fn(0L, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    const long chunk = (n + workers - 1) / workers;
    for (long w = 0; w < workers; ++w) {
        const long begin = w * chunk;
        const long end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, static_cast<int>(w));
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace omf
