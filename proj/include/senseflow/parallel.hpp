#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace senseflow {

// Worker count: an explicit set_thread_count() wins, then SENSEFLOW_THREADS,
// then hardware concurrency. 0 means "auto" in both places.
int thread_count();
void set_thread_count(int n);

// Runs fn(chunk) for chunk in [0, chunks). Chunks are claimed dynamically, so
// callers that need determinism write one partial per chunk and reduce them
// in chunk order afterwards.
template <class Fn>
void parallel_for_chunks(std::size_t chunks, Fn&& fn, int threads = 0)
{
    if (threads <= 0) threads = thread_count();
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), chunks);
    if (workers <= 1) {
        for (std::size_t i = 0; i < chunks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < chunks; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
}

} // namespace senseflow
