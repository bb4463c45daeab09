// Static-chunked parallel_for for the device-local simulation phases.
// Workers only write to disjoint preallocated slots, so results are identical
// for any worker count; ZTRUST_THREADS caps the pool.
#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ztrust {

inline unsigned worker_count(std::size_t n_items) {
    unsigned workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char* env = std::getenv("ZTRUST_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end != env && parsed >= 1 && parsed <= 256) {
            workers = static_cast<unsigned>(parsed);
        }
    }
    if (static_cast<std::size_t>(workers) > n_items) {
        workers = static_cast<unsigned>(n_items == 0 ? 1 : n_items);
    }
    return workers;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = worker_count(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run_chunk = [&](std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        if (w + 1 == workers) {
            run_chunk(begin, end);
        } else {
            threads.emplace_back(run_chunk, begin, end);
        }
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ztrust
