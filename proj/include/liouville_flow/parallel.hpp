#ifndef LIOUVILLE_FLOW_PARALLEL_HPP
#define LIOUVILLE_FLOW_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace liouville_flow
{

namespace detail
{
inline std::atomic<int> &thread_setting()
{
    static std::atomic<int> value{0};
    return value;
}
} // namespace detail

// 0 means "not set": fall back to LIOUVILLE_FLOW_THREADS, then to 1.
inline void set_thread_count(int n)
{
    detail::thread_setting() = std::max(n, 0);
}

inline int thread_count()
{
    if (const int n = detail::thread_setting(); n > 0) {
        return n;
    }
    if (const char *env = std::getenv("LIOUVILLE_FLOW_THREADS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (const std::exception &) {
        }
    }
    return 1;
}

// Runs body(block) for block in [0, n_blocks). Blocks are independent, so any
// result a caller reduces in block order is identical for every thread count.
template <typename Body>
void parallel_blocks(std::size_t n_blocks, Body &&body)
{
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n_blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) {
            body(b);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t b = next++; b < n_blocks; b = next++) {
                try {
                    body(b);
                } catch (...) {
                    const std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

// Element-wise map over [0, n) in fixed-size blocks.
template <typename Body>
void parallel_for(std::size_t n, Body &&body, std::size_t block = 16)
{
    const std::size_t n_blocks = (n + block - 1) / block;
    parallel_blocks(n_blocks, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * block);
        for (std::size_t i = b * block; i < end; ++i) {
            body(i);
        }
    });
}

} // namespace liouville_flow

#endif
