#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

namespace rns::parallel {

namespace detail {
inline std::atomic<int>& thread_count() {
    static std::atomic<int> count{1};
    return count;
}
/// Nonzero inside worker threads: nested parallel calls then run serially.
inline int& local_override() {
    thread_local int value = 0;
    return value;
}
}  // namespace detail

inline void set_threads(int n) { detail::thread_count().store(std::max(1, n)); }
inline int threads() {
    const int local = detail::local_override();
    return local > 0 ? local : detail::thread_count().load();
}

/// Restricts parallel helpers on the calling thread to `n` threads while alive.
class ScopedThreads {
public:
    explicit ScopedThreads(int n) : saved_(detail::local_override()) { detail::local_override() = std::max(1, n); }
    ~ScopedThreads() { detail::local_override() = saved_; }
    ScopedThreads(const ScopedThreads&) = delete;
    ScopedThreads& operator=(const ScopedThreads&) = delete;

private:
    int saved_;
};

/// Runs body(b) for every block b in [0, blocks). Blocks are distributed
/// over worker threads; each block is executed by exactly one thread.
template <class Body>
void for_blocks(int blocks, Body&& body) {
    const int workers = std::min(threads(), blocks);
    if (workers <= 1) {
        for (int b = 0; b < blocks; ++b) body(b);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    {
        std::vector<std::jthread> pool;
        pool.reserve(std::size_t(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                ScopedThreads serial(1);
                try {
                    for (int b = w; b < blocks; b += workers) body(b);
                } catch (...) {
                    errors[std::size_t(w)] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Sum of block_value(b) over blocks. Partial sums are produced per block and
/// accumulated in block order, so the result does not depend on the thread count.
template <class BlockValue>
double reduce_blocks(int blocks, BlockValue&& block_value) {
    std::vector<double> partial(std::size_t(blocks), 0.0);
    for_blocks(blocks, [&](int b) { partial[std::size_t(b)] = block_value(b); });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

/// Maximum of block_value(b) over blocks.
template <class BlockValue>
double max_blocks(int blocks, BlockValue&& block_value) {
    std::vector<double> partial(std::size_t(blocks), 0.0);
    for_blocks(blocks, [&](int b) { partial[std::size_t(b)] = block_value(b); });
    double m = 0.0;
    for (double p : partial) m = std::max(m, p);
    return m;
}

}  // namespace rns::parallel
