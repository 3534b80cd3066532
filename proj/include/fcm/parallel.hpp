#pragma once

// Fixed-chunk worker pool. Work is split into chunks whose boundaries depend
// only on the problem size, and reductions combine per-chunk partials in
// chunk order, so every result is bitwise identical for any worker count.

#include "fcm/common.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace fcm {

inline int& worker_count() {
    static int count = []() {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return count;
}

inline void set_worker_count(int n) { worker_count() = n < 1 ? 1 : n; }

namespace detail {

inline Index chunk_count(Index n) {
    constexpr Index kMaxChunks = 256;
    return n < kMaxChunks ? n : kMaxChunks;
}

// Runs fn(chunk_index, begin, end) over all chunks of [0, n).
template <class Fn>
void run_chunks(Index n, Fn&& fn) {
    if (n <= 0) return;
    const Index chunks = chunk_count(n);
    const int workers = std::min<int>(worker_count(), static_cast<int>(chunks));
    auto chunk_bounds = [&](Index c) {
        const Index lo = c * n / chunks;
        const Index hi = (c + 1) * n / chunks;
        return std::pair<Index, Index>(lo, hi);
    };
    if (workers <= 1) {
        for (Index c = 0; c < chunks; ++c) {
            auto [lo, hi] = chunk_bounds(c);
            fn(c, lo, hi);
        }
        return;
    }
    std::atomic<Index> next{0};
    auto work = [&]() {
        for (;;) {
            const Index c = next.fetch_add(1);
            if (c >= chunks) return;
            auto [lo, hi] = chunk_bounds(c);
            fn(c, lo, hi);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Element-wise parallel loop; fn(i) must write only to its own slot.
template <class Fn>
void parallel_for(Index n, Fn&& fn) {
    detail::run_chunks(n, [&](Index, Index lo, Index hi) {
        for (Index i = lo; i < hi; ++i) fn(i);
    });
}

// Deterministic reduction: per-chunk accumulators produced by fn(acc, i) are
// combined in chunk order with combine(total, partial).
template <class T, class Fn, class Combine>
T chunked_reduce(Index n, T init, Fn&& fn, Combine&& combine) {
    const Index chunks = detail::chunk_count(n);
    if (chunks <= 0) return init;
    std::vector<T> partials(static_cast<std::size_t>(chunks), init);
    detail::run_chunks(n, [&](Index c, Index lo, Index hi) {
        T acc = init;
        for (Index i = lo; i < hi; ++i) fn(acc, i);
        partials[static_cast<std::size_t>(c)] = acc;
    });
    T total = init;
    for (const T& p : partials) combine(total, p);
    return total;
}

}  // namespace fcm
