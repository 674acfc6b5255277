#pragma once

// Chunked parallel-for with a fixed chunk grid, so results that are written
// per item or reduced in chunk order do not depend on the thread count.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace qar::par {

inline size_t thread_count() {
    if (const char* env = std::getenv("QAR_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// fn(begin, end, chunk_index); chunk grid is ceil(n / chunk_size) regardless
// of how many threads execute it.
inline void for_chunks(size_t n, size_t chunk_size,
                       const std::function<void(size_t, size_t, size_t)>& fn) {
    if (n == 0) return;
    size_t chunks = (n + chunk_size - 1) / chunk_size;
    size_t threads = std::min(thread_count(), chunks);
    if (threads <= 1) {
        for (size_t c = 0; c < chunks; ++c) {
            size_t begin = c * chunk_size;
            fn(begin, std::min(begin + chunk_size, n), c);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            while (true) {
                size_t c = next.fetch_add(1);
                if (c >= chunks) return;
                size_t begin = c * chunk_size;
                fn(begin, std::min(begin + chunk_size, n), c);
            }
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace qar::par
