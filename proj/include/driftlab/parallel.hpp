#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

namespace driftlab {

// Worker count: explicit override, else DRIFTLAB_WORKERS, else logical cores.
int default_workers();
void set_default_workers(int workers);

/*!
 * Evaluates fn(0..n-1) on a pool of threads and returns the results in index
 * order, so reductions over the output do not depend on scheduling.
 */
template<class F>
auto parallel_map(std::size_t n, int workers, F&& fn) -> std::vector<std::invoke_result_t<F&, std::size_t>>
{
    using T = std::invoke_result_t<F&, std::size_t>;
    std::vector<T> out(n);
    if (workers <= 0)
        workers = default_workers();
    std::size_t nthreads = std::min<std::size_t>(std::size_t(workers), n);
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t)
        pool.emplace_back(work);
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
    return out;
}

} // namespace driftlab
